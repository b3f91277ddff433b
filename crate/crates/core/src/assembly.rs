//! Discrete Dirichlet Laplacian, surface-measure loads, and the signed-distance corrector.

use std::f64::consts::TAU;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curve, GeometryCache, NodeGeometry};
use crate::grid::{Grid, GridField};
use crate::Vec2;

/// `−Δ_h` on interior nodes in CSR form, with Dirichlet values eliminated into a
/// right-hand-side contribution.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    grid: Grid,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    /// Boundary values on the full grid (interior entries are zero).
    dirichlet: Vec<f64>,
    /// Interior-sized vector of eliminated boundary contributions.
    boundary_rhs: Vec<f64>,
}

impl SparseOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of unknowns, `(n − 2)²`.
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn boundary_rhs(&self) -> &[f64] {
        &self.boundary_rhs
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    /// `y = A x`, parallel over rows with per-row sequential sums.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            *out = acc;
        });
    }

    /// Interior unknown index of grid node `(i, j)`, which must be interior.
    pub fn unknown(&self, i: usize, j: usize) -> usize {
        let m = self.grid.n() - 2;
        (j - 1) * m + (i - 1)
    }

    /// Right-hand side for `−Δ_h v = f` with the operator's Dirichlet data.
    pub fn rhs_from_source(&self, f: &GridField) -> Vec<f64> {
        let n = self.grid.n();
        let mut b = self.boundary_rhs.clone();
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                b[self.unknown(i, j)] += f.get(i, j);
            }
        }
        b
    }

    /// Right-hand side for a load vector `L_i ≈ ∫ μ φ_i` (hat-function weights): `L_i/h²`.
    pub fn rhs_from_load(&self, load: &MeasureLoad) -> Vec<f64> {
        let n = self.grid.n();
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        let mut b = self.boundary_rhs.clone();
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                b[self.unknown(i, j)] += load.values[self.grid.index(i, j)] * inv_h2;
            }
        }
        b
    }

    /// Full grid field from interior unknowns plus the operator's boundary values.
    pub fn to_field(&self, x: &[f64]) -> GridField {
        let n = self.grid.n();
        let mut values = self.dirichlet.clone();
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                values[self.grid.index(i, j)] = x[self.unknown(i, j)];
            }
        }
        GridField::from_values(&self.grid, values).expect("sizes match")
    }

    /// Interior values of a field as an unknown vector.
    pub fn restrict(&self, f: &GridField) -> Vec<f64> {
        let n = self.grid.n();
        let mut x = vec![0.0; self.size()];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                x[self.unknown(i, j)] = f.get(i, j);
            }
        }
        x
    }
}

/// 5-point `−Δ_h` with Dirichlet data taken from `dirichlet` at boundary nodes.
pub fn assemble_laplacian(grid: &Grid, dirichlet: &(dyn Fn(Vec2) -> f64 + Sync)) -> SparseOperator {
    let n = grid.n();
    let m = n - 2;
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let mut boundary = vec![0.0; grid.len()];
    for j in 0..n {
        for i in 0..n {
            if grid.is_boundary(i, j) {
                boundary[grid.index(i, j)] = dirichlet(grid.point(i, j));
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(m * m + 1);
    let mut col_idx = Vec::with_capacity(5 * m * m);
    let mut vals = Vec::with_capacity(5 * m * m);
    let mut boundary_rhs = vec![0.0; m * m];
    row_ptr.push(0);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let r = (j - 1) * m + (i - 1);
            let mut entries = vec![(r, 4.0 * inv_h2)];
            for (a, b) in [(i, j - 1), (i - 1, j), (i + 1, j), (i, j + 1)] {
                if grid.is_boundary(a, b) {
                    boundary_rhs[r] += boundary[grid.index(a, b)] * inv_h2;
                } else {
                    entries.push(((b - 1) * m + (a - 1), -inv_h2));
                }
            }
            entries.sort_by_key(|e| e.0);
            for (c, v) in entries {
                col_idx.push(c);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
    }
    SparseOperator {
        grid: grid.clone(),
        row_ptr,
        col_idx,
        vals,
        diag: vec![4.0 * inv_h2; m * m],
        dirichlet: boundary,
        boundary_rhs,
    }
}

/// Density `Q` on Γ.
#[derive(Clone)]
pub enum SurfaceDensity {
    /// `Q(t) = c + Σ (aₖ cos kt + bₖ sin kt)` in the curve parameter.
    Parametric { constant: f64, modes: Vec<DensityMode> },
    /// Restriction of a function defined on Ω; parameter derivatives by central differences
    /// with step `1e-4·2π`.
    Ambient(Arc<dyn Fn(Vec2) -> f64 + Send + Sync>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMode {
    pub k: u32,
    pub cos: f64,
    pub sin: f64,
}

impl std::fmt::Debug for SurfaceDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Parametric { constant, modes } => {
                f.debug_struct("Parametric").field("constant", constant).field("modes", modes).finish()
            }
            Self::Ambient(_) => f.write_str("Ambient(..)"),
        }
    }
}

impl SurfaceDensity {
    pub fn constant(q: f64) -> Self {
        Self::Parametric { constant: q, modes: Vec::new() }
    }

    /// `Q(t) = base + amplitude·cos(kt)`.
    pub fn cosine(base: f64, amplitude: f64, k: u32) -> Self {
        Self::Parametric { constant: base, modes: vec![DensityMode { k, cos: amplitude, sin: 0.0 }] }
    }

    /// Sum of two parametric densities.
    pub fn plus(&self, other: &SurfaceDensity) -> Result<Self> {
        match (self, other) {
            (Self::Parametric { constant: a, modes: ma }, Self::Parametric { constant: b, modes: mb }) => {
                Ok(Self::Parametric { constant: a + b, modes: ma.iter().chain(mb).copied().collect() })
            }
            _ => Err(Error::InvalidArgument("only parametric densities can be added".into())),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Parametric { constant, modes } if *constant == 0.0 && modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0))
    }

    /// `(Q, Q_t, Q_tt)` at parameter `t`.
    pub fn jet_t(&self, curve: &Curve, t: f64) -> [f64; 3] {
        match self {
            Self::Parametric { constant, modes } => {
                let mut out = [*constant, 0.0, 0.0];
                for m in modes {
                    let k = m.k as f64;
                    let (s, c) = (k * t).sin_cos();
                    out[0] += m.cos * c + m.sin * s;
                    out[1] += k * (-m.cos * s + m.sin * c);
                    out[2] -= k * k * (m.cos * c + m.sin * s);
                }
                out
            }
            Self::Ambient(f) => {
                let dt = 1e-4 * TAU;
                let (a, b, c) = (f(curve.point(t - dt)), f(curve.point(t)), f(curve.point(t + dt)));
                [b, (c - a) / (2.0 * dt), (c - 2.0 * b + a) / (dt * dt)]
            }
        }
    }

    pub fn value(&self, curve: &Curve, t: f64) -> f64 {
        match self {
            Self::Ambient(f) => f(curve.point(t)),
            _ => self.jet_t(curve, t)[0],
        }
    }

    /// `(Q, Q_σ, Q_σσ)` with σ the arc length.
    pub fn jet_arclength(&self, curve: &Curve, t: f64) -> [f64; 3] {
        let [q, qt, qtt] = self.jet_t(curve, t);
        let [_, d1, d2, _] = curve.jet(t);
        let speed = d1.norm();
        let speed_t = d1.dot(&d2) / speed;
        [q, qt / speed, (qtt * speed - qt * speed_t) / speed.powi(3)]
    }

    /// `∫_Γ Q dH¹` by the periodic trapezoidal rule.
    pub fn total_mass(&self, curve: &Curve) -> f64 {
        let n = 4096;
        let dt = TAU / n as f64;
        (0..n).map(|k| k as f64 * dt).map(|t| self.value(curve, t) * curve.speed(t)).sum::<f64>() * dt
    }
}

/// Nodal load vector of a measure, in hat-function weights `L_i ≈ ∫ φ_i dμ`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureLoad {
    pub values: Vec<f64>,
    pub total_mass: f64,
    pub samples: usize,
}

impl MeasureLoad {
    pub fn as_field(&self, grid: &Grid) -> GridField {
        GridField::from_values(grid, self.values.clone()).expect("load has one value per node")
    }
}

/// Default number of curve samples for the collocation load: 16 per cell length, at least 64.
pub fn collocation_samples(curve: &Curve, grid: &Grid) -> usize {
    let per_cell = (curve.length() / grid.h()).ceil() as usize;
    (16 * per_cell).max(64)
}

/// `L_i = ∫_Γ Q φ_i dH¹` for bilinear hats `φ_i`, by the trapezoidal rule in the curve parameter.
pub fn surface_load_collocation(curve: &Curve, q: &SurfaceDensity, grid: &Grid) -> Result<MeasureLoad> {
    surface_load_collocation_with(curve, q, grid, collocation_samples(curve, grid))
}

pub fn surface_load_collocation_with(curve: &Curve, q: &SurfaceDensity, grid: &Grid, samples: usize) -> Result<MeasureLoad> {
    if samples < 64 {
        return Err(Error::QuadratureUnderresolved { samples });
    }
    let rect = grid.rect();
    let h = grid.h();
    let n = grid.n();
    let dt = TAU / samples as f64;
    let weights: Vec<(Vec2, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * dt;
            let [p, d1, _, _] = curve.jet(t);
            (p, q.value(curve, t) * d1.norm() * dt)
        })
        .collect();
    let mut values = vec![0.0; grid.len()];
    for &(p, w) in &weights {
        let fx = ((p.x - rect.x0) / h).clamp(0.0, (n - 1) as f64 - 1e-9);
        let fy = ((p.y - rect.y0) / h).clamp(0.0, (n - 1) as f64 - 1e-9);
        let (i, j) = (fx.floor() as usize, fy.floor() as usize);
        let (ax, ay) = (fx - i as f64, fy - j as f64);
        values[grid.index(i, j)] += w * (1.0 - ax) * (1.0 - ay);
        values[grid.index(i + 1, j)] += w * ax * (1.0 - ay);
        values[grid.index(i, j + 1)] += w * (1.0 - ax) * ay;
        values[grid.index(i + 1, j + 1)] += w * ax * ay;
    }
    let total_mass = weights.iter().map(|w| w.1).sum();
    Ok(MeasureLoad { values, total_mass, samples })
}

/// Cosine-kernel smoothed delta `δ_w(s) = (1 + cos(πs/w))/(2w)` for `|s| < w`.
pub fn cosine_delta(s: f64, w: f64) -> f64 {
    if s.abs() >= w {
        0.0
    } else {
        (1.0 + (std::f64::consts::PI * s / w).cos()) / (2.0 * w)
    }
}

/// `L_i = h²·Q̃(x_i)·δ_w(d(x_i))` with `w = width_cells·h`.
pub fn surface_load_regularized(
    cache: &GeometryCache,
    curve: &Curve,
    q: &SurfaceDensity,
    width_cells: f64,
    eps: f64,
) -> Result<MeasureLoad> {
    let grid = cache.grid();
    let h = grid.h();
    let w = width_cells * h;
    if w > 0.5 * eps {
        return Err(Error::TubeTooNarrow { width: w, half_tube: 0.5 * eps });
    }
    let values: Vec<f64> = cache
        .nodes()
        .par_iter()
        .map(|g| {
            let k = cosine_delta(g.distance, w);
            if k == 0.0 {
                0.0
            } else {
                h * h * q.value(curve, g.t) * k
            }
        })
        .collect();
    let total_mass = values.iter().sum();
    Ok(MeasureLoad { values, total_mass, samples: 0 })
}

/// Quintic smoothstep cutoff in `|s|`: 1 on `[0, ε/2]`, 0 beyond `ε`, C² in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub eps: f64,
}

impl Cutoff {
    /// `(ψ, ψ′, ψ″)` as functions of `a = |s|`.
    pub fn profile(&self, a: f64) -> [f64; 3] {
        let half = 0.5 * self.eps;
        if a <= half {
            return [1.0, 0.0, 0.0];
        }
        if a >= self.eps {
            return [0.0, 0.0, 0.0];
        }
        let xi = (a - half) / half;
        let s = xi * xi * xi * (10.0 - 15.0 * xi + 6.0 * xi * xi);
        let s1 = 30.0 * xi * xi * (1.0 - xi) * (1.0 - xi);
        let s2 = 60.0 * xi * (1.0 - 3.0 * xi + 2.0 * xi * xi);
        [1.0 - s, -s1 / half, -s2 / (half * half)]
    }
}

/// Pointwise corrector values at one location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectorValue {
    /// Normal extension `Q̃ = Q∘π_Γ`.
    pub qtilde: f64,
    /// `w = −ψ Q̃ |d|/2`.
    pub w: f64,
    /// `r = −Δw` off Γ (average of one-sided limits on Γ).
    pub r: f64,
}

/// Analytic corrector `w = −ψ(d)·Q̃·|d|/2` and its pointwise `−Δw`.
#[derive(Clone, Debug)]
pub struct Corrector {
    pub curve: Curve,
    pub density: SurfaceDensity,
    pub cutoff: Cutoff,
}

/// Tube frame data at a projected point.
struct TubeFrame {
    q: [f64; 3],
    kappa: f64,
    kappa_s: f64,
    factor: f64,
}

impl Corrector {
    pub fn new(curve: Curve, density: SurfaceDensity, eps: f64) -> Self {
        Self { curve, density, cutoff: Cutoff { eps } }
    }

    fn frame(&self, t: f64, d: f64, kappa: f64) -> TubeFrame {
        TubeFrame {
            q: self.density.jet_arclength(&self.curve, t),
            kappa,
            kappa_s: self.curve.curvature_arclength_derivative(t),
            factor: 1.0 + d * kappa,
        }
    }

    /// Corrector at a point with projection parameter `t`, signed distance `d`, and
    /// curvature `kappa` at the foot point.
    pub fn eval(&self, t: f64, d: f64, kappa: f64) -> CorrectorValue {
        let qtilde = self.density.value(&self.curve, t);
        let a = d.abs();
        if a >= self.cutoff.eps {
            return CorrectorValue { qtilde, w: 0.0, r: 0.0 };
        }
        let [psi, _, _] = self.cutoff.profile(a);
        let w = -0.5 * psi * qtilde * a;
        let r = if a < 1e-12 {
            0.5 * (self.minus_laplacian(t, a, kappa) + self.minus_laplacian(t, -a, kappa))
        } else {
            self.minus_laplacian(t, d, kappa)
        };
        CorrectorValue { qtilde, w, r }
    }

    pub fn eval_node(&self, g: &NodeGeometry) -> CorrectorValue {
        self.eval(g.t, g.distance, g.curvature)
    }

    /// `−Δw` at signed distance `s ≠ 0` (for `s = ±0` the one-sided limit).
    fn minus_laplacian(&self, t: f64, s: f64, kappa: f64) -> f64 {
        let sg = if s.is_sign_negative() { -1.0 } else { 1.0 };
        self.minus_laplacian_side(t, s, kappa, sg)
    }

    /// The `−Δw` formula of side `sg = ±1`, extended smoothly to a signed distance `s`
    /// of either sign (valid for `|s| < ε/2`, where `ψ ≡ 1`).
    fn minus_laplacian_side(&self, t: f64, s: f64, kappa: f64, sg: f64) -> f64 {
        let f = self.frame(t, s, kappa);
        let a = sg * s;
        let [psi, dpsi, ddpsi] = self.cutoff.profile(a.abs());
        let phi = psi * a;
        let dphi = sg * (dpsi * a + psi);
        let ddphi = ddpsi * a + 2.0 * dpsi;
        let [q, q_s, q_ss] = f.q;
        let lap_q = q_ss / (f.factor * f.factor) - s * f.kappa_s * q_s / f.factor.powi(3);
        0.5 * (q * (ddphi + dphi * f.kappa / f.factor) + phi * lap_q)
    }

    /// Load seen by the 5-point Laplacian for `−Δh = −r` at a node.
    ///
    /// The 5-point stencil applied to a `C¹` function is the sum of tent averages of
    /// `∂ₓₓ` and `∂ᵧᵧ` along the two stencil arms. `r` jumps across Γ while the
    /// remainder stays `C¹`, so its Hessian jump is `[r]·ν⊗ν`; nodes whose arms cross Γ
    /// therefore get the one-sided formulas blended by `νₓ²·Mₓ + νᵧ²·Mᵧ`, with `M` the
    /// arm's tent mass on the inner side. Elsewhere this is `r` itself.
    pub fn stencil_residual(&self, g: &NodeGeometry, h: f64) -> f64 {
        let d = g.distance;
        if d.abs() >= 1.5 * h || 1.5 * h >= 0.5 * self.cutoff.eps {
            return self.eval_node(g).r;
        }
        let nu = g.normal;
        let inner = nu.x * nu.x * tent_mass_below(nu.x, d, h) + nu.y * nu.y * tent_mass_below(nu.y, d, h);
        let r_in = self.minus_laplacian_side(g.t, d, g.curvature, -1.0);
        let r_out = self.minus_laplacian_side(g.t, d, g.curvature, 1.0);
        inner * r_in + (1.0 - inner) * r_out
    }

    /// Gradient `∇Q̃` and Hessian `D²Q̃`, and `D²d`, at a point of the tube.
    fn second_order(&self, t: f64, d: f64, kappa: f64) -> (f64, Vec2, [[f64; 2]; 2], [[f64; 2]; 2], Vec2) {
        let f = self.frame(t, d, kappa);
        let nu = self.curve.normal(t);
        let tau = Vec2::new(-nu.y, nu.x);
        let [q, q_s, q_ss] = f.q;
        let grad_sigma = tau / f.factor;
        let grad_q = grad_sigma * q_s;
        let mut hess_q = [[0.0; 2]; 2];
        let mut hess_d = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let d2sigma = -f.kappa * (nu[i] * tau[j] + tau[i] * nu[j]) / (f.factor * f.factor)
                    - d * f.kappa_s * tau[i] * tau[j] / f.factor.powi(3);
                hess_q[i][j] = q_ss * grad_sigma[i] * grad_sigma[j] + q_s * d2sigma;
                hess_d[i][j] = f.kappa / f.factor * tau[i] * tau[j];
            }
        }
        (q, grad_q, hess_q, hess_d, nu)
    }

    /// Absolutely continuous part `g_ij` of `∂²ᵢⱼ(Q̃|d|/2)` at a point off Γ.
    pub fn hessian_ac_part(&self, t: f64, d: f64, kappa: f64) -> [[f64; 2]; 2] {
        let (q, grad_q, hess_q, hess_d, nu) = self.second_order(t, d, kappa);
        let sg = d.signum();
        let mut g = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] = 0.5
                    * (d.abs() * hess_q[i][j] + sg * (grad_q[i] * nu[j] + nu[i] * grad_q[j]) + sg * q * hess_d[i][j]);
            }
        }
        g
    }
}

/// Mass of the unit-mass tent `(1 − |s|/h)/h` on `{s : d + a·s < 0}`.
fn tent_mass_below(a: f64, d: f64, h: f64) -> f64 {
    // Cumulative tent mass on [−h, s].
    let cum = |s: f64| {
        let s = s.clamp(-h, h);
        if s <= 0.0 {
            (s + h) * (s + h) / (2.0 * h * h)
        } else {
            1.0 - (h - s) * (h - s) / (2.0 * h * h)
        }
    };
    if a.abs() < 1e-14 {
        return if d < 0.0 { 1.0 } else { 0.0 };
    }
    let root = -d / a;
    if a > 0.0 {
        cum(root)
    } else {
        1.0 - cum(root)
    }
}

/// Corrector sampled on a grid.
#[derive(Clone, Debug)]
pub struct CorrectorBundle {
    pub corrector: Corrector,
    pub w: GridField,
    pub residual_rhs: GridField,
    pub qtilde: GridField,
}

impl CorrectorBundle {
    pub fn eps(&self) -> f64 {
        self.corrector.cutoff.eps
    }
}

/// Samples the corrector on every node of the cached grid.
pub fn build_corrector(cache: &GeometryCache, curve: &Curve, q: &SurfaceDensity, eps: f64) -> Result<CorrectorBundle> {
    let grid = cache.grid();
    for (idx, g) in cache.nodes().iter().enumerate() {
        if g.distance.abs() < eps {
            let factor = 1.0 + g.distance * g.curvature;
            if factor <= 0.1 {
                let p = grid.point_at(idx);
                return Err(Error::TubeDegenerate { factor, x: p.x, y: p.y });
            }
        }
    }
    let corrector = Corrector::new(curve.clone(), q.clone(), eps);
    let vals: Vec<CorrectorValue> = cache.nodes().par_iter().map(|g| corrector.eval_node(g)).collect();
    let field = |f: fn(&CorrectorValue) -> f64| {
        GridField::from_values(grid, vals.iter().map(f).collect()).expect("one value per node")
    };
    Ok(CorrectorBundle { w: field(|v| v.w), residual_rhs: field(|v| v.r), qtilde: field(|v| v.qtilde), corrector })
}

/// Smooth compactly supported test function `A·exp(1 − 1/(1 − |x − c|²/R²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec2,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn value(&self, x: Vec2) -> f64 {
        let y = x - self.center;
        let a = 1.0 - y.norm_squared() / (self.radius * self.radius);
        if a <= 0.0 {
            0.0
        } else {
            self.amplitude * (1.0 - 1.0 / a).exp()
        }
    }

    pub fn hessian(&self, x: Vec2) -> [[f64; 2]; 2] {
        let y = x - self.center;
        let r2 = self.radius * self.radius;
        let a = 1.0 - y.norm_squared() / r2;
        let mut out = [[0.0; 2]; 2];
        if a <= 0.0 {
            return out;
        }
        let phi = self.amplitude * (1.0 - 1.0 / a).exp();
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { 1.0 } else { 0.0 };
                out[i][j] = phi
                    * (4.0 * y[i] * y[j] / (r2 * r2 * a.powi(4)) - 2.0 * delta / (r2 * a * a)
                        - 8.0 * y[i] * y[j] / (r2 * r2 * a.powi(3)));
            }
        }
        out
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
const GAUSS2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Residuals `|∫(Q̃|d|/2)∂²ᵢⱼφ − ∫_Γ Qνᵢνⱼφ − ∫gᵢⱼφ|` for `(i,j) ∈ {(0,0), (0,1), (1,1)}`.
///
/// Volume integrals use 3×3 Gauss-Legendre per cell; cells cut by Γ are subdivided `S × S`
/// with `S = max(4, n/8)` and 2×2 Gauss-Legendre per subcell. The curve integral uses the periodic trapezoidal rule.
pub fn validate_hessian_identity_all(corrector: &Corrector, bump: &Bump, grid: &Grid) -> Result<[f64; 3]> {
    let curve = &corrector.curve;
    let eps = corrector.cutoff.eps;
    if bump.amplitude == 0.0 {
        return Ok([0.0; 3]);
    }
    let center_proj = curve.project(bump.center)?;
    let reach = center_proj.distance.abs() + bump.radius;
    if reach >= eps {
        return Err(Error::SupportViolation { reach, eps });
    }
    const PAIRS: [(usize, usize); 3] = [(0, 0), (0, 1), (1, 1)];

    let samples = 8192;
    let dt = TAU / samples as f64;
    let mut surface = [0.0; 3];
    for k in 0..samples {
        let t = k as f64 * dt;
        let [p, d1, _, _] = curve.jet(t);
        let phi = bump.value(p);
        if phi == 0.0 {
            continue;
        }
        let nu = Vec2::new(d1.y, -d1.x) / d1.norm();
        let w = corrector.density.value(curve, t) * phi * d1.norm() * dt;
        for (s, &(i, j)) in surface.iter_mut().zip(&PAIRS) {
            *s += w * nu[i] * nu[j];
        }
    }

    let h = grid.h();
    let rect = grid.rect();
    let sub = (grid.n() / 8).max(4);
    let integrand = |x: Vec2, hint: f64| -> Result<[f64; 3]> {
        let phi = bump.value(x);
        let hphi = bump.hessian(x);
        if phi == 0.0 && hphi.iter().flatten().all(|v| *v == 0.0) {
            return Ok([0.0; 3]);
        }
        let pr = curve.project_near(x, hint)?;
        let q = corrector.density.value(curve, pr.t);
        let g = corrector.hessian_ac_part(pr.t, pr.distance, pr.curvature);
        let mut out = [0.0; 3];
        for (o, &(i, j)) in out.iter_mut().zip(&PAIRS) {
            *o = 0.5 * q * pr.distance.abs() * hphi[i][j] - g[i][j] * phi;
        }
        Ok(out)
    };
    let (c0, c1) = grid.x_range(bump.center.x - bump.radius - h, bump.center.x + bump.radius + h);
    let (r0, r1) = grid.y_range(bump.center.y - bump.radius - h, bump.center.y + bump.radius + h);
    let cells: Vec<(usize, usize)> = (r0..r1.min(grid.n() - 2) + 1)
        .flat_map(|j| (c0..c1.min(grid.n() - 2) + 1).map(move |i| (i, j)))
        .collect();
    let per_cell: Vec<[f64; 3]> = cells
        .par_iter()
        .map(|&(i, j)| -> Result<[f64; 3]> {
            let mid = Vec2::new(rect.x0 + (i as f64 + 0.5) * h, rect.y0 + (j as f64 + 0.5) * h);
            let pr = curve.project(mid)?;
            let cut = pr.distance.abs() < h;
            let (parts, rule): (usize, &[(f64, f64)]) = if cut { (sub, &GAUSS2) } else { (1, &GAUSS3) };
            let hs = h / parts as f64;
            let mut acc = [0.0; 3];
            for b in 0..parts {
                for a in 0..parts {
                    let x0 = rect.x0 + i as f64 * h + a as f64 * hs;
                    let y0 = rect.y0 + j as f64 * h + b as f64 * hs;
                    for &(gx, wx) in rule {
                        for &(gy, wy) in rule {
                            let v = integrand(Vec2::new(x0 + gx * hs, y0 + gy * hs), pr.t)?;
                            for k in 0..3 {
                                acc[k] += v[k] * wx * wy * hs * hs;
                            }
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut volume = [0.0; 3];
    for c in &per_cell {
        for k in 0..3 {
            volume[k] += c[k];
        }
    }
    Ok([(volume[0] - surface[0]).abs(), (volume[1] - surface[1]).abs(), (volume[2] - surface[2]).abs()])
}

/// Single-component form of [`validate_hessian_identity_all`]; `i, j ∈ {0, 1}`.
pub fn validate_hessian_identity(corrector: &Corrector, bump: &Bump, grid: &Grid, i: usize, j: usize) -> Result<f64> {
    if i > 1 || j > 1 {
        return Err(Error::InvalidArgument(format!("component ({i}, {j}) out of range")));
    }
    let all = validate_hessian_identity_all(corrector, bump, grid)?;
    Ok(match (i.min(j), i.max(j)) {
        (0, 0) => all[0],
        (0, 1) => all[1],
        _ => all[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry_cache, tube_radius, CosineMode, Rect};
    use std::f64::consts::PI;

    fn square(n: usize) -> Grid {
        Grid::new(Rect::centered_square(1.0), n).unwrap()
    }

    fn circle() -> Curve {
        Curve::circle(Vec2::zeros(), 0.5).unwrap()
    }

    #[test]
    fn laplacian_reproduces_harmonic_data() {
        let g = square(33);
        for f in [
            (|p: Vec2| p.x + p.y) as fn(Vec2) -> f64,
            |p: Vec2| p.x * p.x - p.y * p.y,
            |_| 0.0,
        ] {
            let op = assemble_laplacian(&g, &f);
            // A x_exact = boundary_rhs for discrete-harmonic data
            let exact = op.restrict(&GridField::from_fn(&g, f));
            let mut y = vec![0.0; op.size()];
            op.apply(&exact, &mut y);
            for (a, b) in y.iter().zip(op.boundary_rhs()) {
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = square(17);
        let op = assemble_laplacian(&g, &|_| 0.0);
        for r in 0..op.size() {
            for (c, v) in op.row(r) {
                let back: f64 = op.row(c).filter(|e| e.0 == r).map(|e| e.1).sum();
                assert_eq!(v, back);
            }
        }
    }

    #[test]
    fn collocation_masses() {
        let g = square(129);
        let c = circle();
        let load = surface_load_collocation(&c, &SurfaceDensity::constant(1.0), &g).unwrap();
        assert!((load.total_mass - PI).abs() < 1e-8);
        assert!((load.values.iter().sum::<f64>() - PI).abs() < 1e-8);
        let zero = surface_load_collocation(&c, &SurfaceDensity::constant(0.0), &g).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let cos = surface_load_collocation(&c, &SurfaceDensity::cosine(0.0, 1.0, 1), &g).unwrap();
        assert!(cos.total_mass.abs() < 1e-8);
        assert!(matches!(
            surface_load_collocation_with(&c, &SurfaceDensity::constant(1.0), &g, 32),
            Err(Error::QuadratureUnderresolved { samples: 32 })
        ));
    }

    #[test]
    fn collocation_support_is_local() {
        let g = square(65);
        let c = Curve::ellipse(Vec2::new(0.1, 0.0), 0.6, 0.4).unwrap();
        let cache = build_geometry_cache(&c, &g).unwrap();
        let load = surface_load_collocation(&c, &SurfaceDensity::constant(1.0), &g).unwrap();
        for (idx, v) in load.values.iter().enumerate() {
            if cache.at(idx).distance.abs() > g.h() * 2f64.sqrt() {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn regularized_mass_close() {
        let g = square(257);
        let c = circle();
        let cache = build_geometry_cache(&c, &g).unwrap();
        let eps = tube_radius(&c, &g.rect()).unwrap();
        let load = surface_load_regularized(&cache, &c, &SurfaceDensity::constant(1.0), 2.0, eps).unwrap();
        assert!((load.total_mass - PI).abs() < 0.01 * PI, "{}", load.total_mass);
        let zero = surface_load_regularized(&cache, &c, &SurfaceDensity::constant(0.0), 2.0, eps).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        assert!(matches!(
            surface_load_regularized(&cache, &c, &SurfaceDensity::constant(1.0), 40.0, eps),
            Err(Error::TubeTooNarrow { .. })
        ));
    }

    #[test]
    fn corrector_examples_pointwise() {
        // ψ ≡ 1 at |d| = 0.25 requires ε ≥ 0.5
        let corr = Corrector::new(circle(), SurfaceDensity::constant(1.0), 0.5);
        let out = corr.eval(0.0, 0.25, 2.0);
        assert!((out.w + 0.125).abs() < 1e-15);
        assert!((out.r - 2.0 / 3.0).abs() < 1e-14);
        let inn = corr.eval(0.0, -0.25, 2.0);
        assert!((inn.r + 2.0).abs() < 1e-14);
    }

    #[test]
    fn corrector_vanishes_outside_tube_and_on_curve() {
        let g = square(65);
        let c = circle();
        let cache = build_geometry_cache(&c, &g).unwrap();
        let b = build_corrector(&cache, &c, &SurfaceDensity::cosine(1.0, 0.5, 1), 0.25).unwrap();
        for (idx, node) in cache.nodes().iter().enumerate() {
            if node.distance.abs() >= 0.25 {
                assert_eq!(b.w.values()[idx], 0.0);
                assert_eq!(b.residual_rhs.values()[idx], 0.0);
            }
            if node.distance == 0.0 {
                assert_eq!(b.w.values()[idx], 0.0);
            }
        }
        assert!(b.residual_rhs.is_finite());
    }

    /// `−Δw` from the tube formula against a centered difference of `w` itself.
    #[test]
    fn corrector_residual_matches_finite_difference() {
        let star = Curve::fourier_star(Vec2::zeros(), 0.5, vec![CosineMode { k: 3, amplitude: 0.06 }]).unwrap();
        let eps = tube_radius(&star, &Rect::centered_square(1.0)).unwrap();
        let corr = Corrector::new(star.clone(), SurfaceDensity::cosine(1.0, 0.5, 2), eps);
        let w = |x: Vec2| {
            let p = star.project(x).unwrap();
            corr.eval(p.t, p.distance, p.curvature).w
        };
        let hh = 1e-3;
        for k in 0..24 {
            let t = 0.26 * k as f64;
            for &s in &[-0.8, -0.55, -0.3, 0.2, 0.45, 0.7, 0.9] {
                let x = star.point(t) + star.normal(t) * (s * eps);
                let lap = (w(x + Vec2::new(hh, 0.0)) + w(x - Vec2::new(hh, 0.0)) + w(x + Vec2::new(0.0, hh))
                    + w(x - Vec2::new(0.0, hh))
                    - 4.0 * w(x))
                    / (hh * hh);
                let p = star.project(x).unwrap();
                let r = corr.eval(p.t, p.distance, p.curvature).r;
                assert!((r + lap).abs() < 2e-3 * (1.0 + r.abs()), "s={s} t={t}: r={r}, -lap={}", -lap);
            }
        }
    }

    #[test]
    fn normal_extension_is_constant_along_normals() {
        let e = Curve::ellipse(Vec2::zeros(), 0.6, 0.4).unwrap();
        let eps = tube_radius(&e, &Rect::centered_square(1.0)).unwrap();
        let corr = Corrector::new(e.clone(), SurfaceDensity::cosine(1.0, 0.5, 1), eps);
        for k in 0..16 {
            let t = 0.39 * k as f64;
            let q0 = corr.density.value(&e, t);
            for &s in &[-0.9, -0.4, 0.3, 0.95] {
                let x = e.point(t) + e.normal(t) * (s * eps);
                let p = e.project(x).unwrap();
                assert!((corr.eval(p.t, p.distance, p.curvature).qtilde - q0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_identity_trivial_cases() {
        let g = square(65);
        let corr = Corrector::new(circle(), SurfaceDensity::constant(1.0), 0.25);
        let zero = Bump { center: Vec2::new(0.5, 0.0), radius: 0.2, amplitude: 0.0 };
        assert_eq!(validate_hessian_identity(&corr, &zero, &g, 0, 0).unwrap(), 0.0);
        let wide = Bump { center: Vec2::new(0.5, 0.0), radius: 0.3, amplitude: 1.0 };
        assert!(matches!(validate_hessian_identity(&corr, &wide, &g, 0, 0), Err(Error::SupportViolation { .. })));
    }

    #[test]
    fn hessian_identity_converges() {
        let corr = Corrector::new(circle(), SurfaceDensity::constant(1.0), 0.25);
        let bump = Bump { center: Vec2::new(0.5, 0.0), radius: 0.2, amplitude: 1.0 };
        let r: Vec<[f64; 3]> =
            [65, 129, 257].iter().map(|&n| validate_hessian_identity_all(&corr, &bump, &square(n)).unwrap()).collect();
        for k in [0, 2] {
            assert!(r[2][k] < r[0][k] / 2.0_f64.powf(3.0), "{k}: {:?}", r);
        }
    }

    #[test]
    fn tent_mass_limits() {
        let h = 0.1;
        assert!((tent_mass_below(1.0, 0.0, h) - 0.5).abs() < 1e-15);
        assert_eq!(tent_mass_below(1.0, -h, h), 1.0);
        assert_eq!(tent_mass_below(-0.6, 2.0 * h, h), 0.0);
        assert_eq!(tent_mass_below(0.0, -1e-3, h), 1.0);
        let (a, d) = (0.7, 0.03);
        assert!((tent_mass_below(a, d, h) + tent_mass_below(-a, -d, h) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stencil_load_is_consistent_across_interface() {
        let sol = crate::oracle::radial_poisson_exact(1.0, 0.5, 0.0).unwrap();
        for n in [121, 129] {
            let grid = square(n);
            let h = grid.h();
            let c = circle();
            let eps = tube_radius(&c, &grid.rect()).unwrap();
            let cache = build_geometry_cache(&c, &grid).unwrap();
            let cor = Corrector::new(c.clone(), SurfaceDensity::constant(1.0), eps);
            let remainder = |x: Vec2| {
                let p = c.project(x).unwrap();
                sol.level_at(0, x.x, x.y) - cor.eval(p.t, p.distance, p.curvature).w
            };
            let (mut stencil, mut pointwise) = (0.0_f64, 0.0_f64);
            for i in 1..n - 1 {
                for j in 1..n - 1 {
                    let g = cache.node(i, j);
                    if g.distance.abs() >= 1.5 * h {
                        continue;
                    }
                    let x = grid.point(i, j);
                    let lap = (remainder(x + Vec2::new(h, 0.0))
                        + remainder(x - Vec2::new(h, 0.0))
                        + remainder(x + Vec2::new(0.0, h))
                        + remainder(x - Vec2::new(0.0, h))
                        - 4.0 * remainder(x))
                        / (h * h);
                    stencil = stencil.max((lap - cor.stencil_residual(g, h)).abs());
                    pointwise = pointwise.max((lap - cor.eval_node(g).r).abs());
                }
            }
            assert!(stencil < 2.0 * h, "n={n}: {stencil}");
            assert!(pointwise > 0.5, "n={n}: {pointwise}");
        }
    }
}
