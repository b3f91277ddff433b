//! Uniform grids, grid fields, the 5-point Laplacian, and one-sided local polynomial fits.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Curve, GeometryCache, Rect, Side};
use crate::Vec2;

pub const MIN_NODES: usize = 17;

/// Uniform square-cell grid with `n × n` nodes including the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    rect: Rect,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(rect: Rect, n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("n = {n} is below the minimum {MIN_NODES}")));
        }
        let (wx, wy) = (rect.x1 - rect.x0, rect.y1 - rect.y0);
        if (wx - wy).abs() > 1e-12 * wx.max(wy) {
            return Err(Error::InvalidGrid(format!("cells must be square: width {wx} vs height {wy}")));
        }
        Ok(Self { rect, n, h: wx / (n - 1) as f64 })
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major index: `i` along x, `j` along y.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.rect.x0 + i as f64 * self.h, self.rect.y0 + j as f64 * self.h)
    }

    pub fn point_at(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        self.point(i, j)
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    /// The in-range 5-point neighbors of `(i, j)`.
    pub fn neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
        let n = self.n as isize;
        let (i, j) = (i as isize, j as isize);
        [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
            .into_iter()
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < n && b < n)
            .map(|(a, b)| (a as usize, b as usize))
    }

    /// Node index range `[lo, hi]` (clamped) covering the closed interval `[a, b]` along x.
    pub fn x_range(&self, a: f64, b: f64) -> (usize, usize) {
        self.axis_range(a - self.rect.x0, b - self.rect.x0)
    }

    pub fn y_range(&self, a: f64, b: f64) -> (usize, usize) {
        self.axis_range(a - self.rect.y0, b - self.rect.y0)
    }

    fn axis_range(&self, a: f64, b: f64) -> (usize, usize) {
        let last = (self.n - 1) as f64;
        let lo = (a / self.h).ceil().clamp(0.0, last) as usize;
        let hi = (b / self.h).floor().clamp(0.0, last) as usize;
        (lo, hi)
    }
}

/// Scalar values on every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(Vec2) -> f64 + Sync) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|idx| f(grid.point_at(idx))).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidArgument("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    /// Discrete Laplacian `(f_E + f_W + f_N + f_S − 4 f_C)/h²` at interior nodes; boundary
    /// values are copied through unchanged.
    pub fn apply_laplacian(&self) -> GridField {
        let n = self.grid.n;
        let inv_h2 = 1.0 / (self.grid.h * self.grid.h);
        let f = &self.values;
        let mut out = self.values.clone();
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            if j == 0 || j == n - 1 {
                return;
            }
            for i in 1..n - 1 {
                let c = j * n + i;
                row[i] = (f[c + 1] + f[c - 1] + f[c + n] + f[c - n] - 4.0 * f[c]) * inv_h2;
            }
        });
        GridField { grid: self.grid.clone(), values: out }
    }

    /// CSV with columns `x,y,value`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,value")?;
        for (idx, v) in self.values.iter().enumerate() {
            let p = self.grid.point_at(idx);
            writeln!(out, "{:.16e},{:.16e},{:.16e}", p.x, p.y, v)?;
        }
        Ok(())
    }
}

/// A point on Γ with its frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    pub t: f64,
    pub p: Vec2,
    pub nu: Vec2,
    pub tau: Vec2,
}

/// Probe points equally spaced in the curve parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    pub fn uniform(curve: &Curve, count: usize) -> Self {
        let probes = crate::geometry::uniform_parameters(count)
            .map(|t| {
                let nu = curve.normal(t);
                Probe { t, p: curve.point(t), nu, tau: Vec2::new(-nu.y, nu.x) }
            })
            .collect();
        Self { probes }
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

/// Controls for one-sided fits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Total polynomial degree.
    pub degree: usize,
    /// Radius of the node disk, in units of h.
    pub radius_cells: f64,
    /// Minimum |d| of a node used in the fit, in units of h.
    pub min_offset_cells: f64,
}

impl FitOptions {
    /// Default for derivatives up to `max_order`: degree `max_order + 2`, radius
    /// `(max_order + 3)·2h`, nodes at least `h` away from Γ.
    pub fn for_order(max_order: usize) -> Self {
        Self { degree: max_order + 2, radius_cells: 2.0 * (max_order + 3) as f64, min_offset_cells: 1.0 }
    }
}

/// A polynomial in `(x − c)/R, (y − c)/R` fitted by least squares.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFit {
    pub center: Vec2,
    pub scale: f64,
    pub degree: usize,
    /// Coefficients in graded order `(a, b)` with `a + b = 0, 1, …`, `a` descending.
    pub coeffs: Vec<f64>,
    pub nodes_used: usize,
}

fn monomials(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for k in 0..=degree {
        for a in (0..=k).rev() {
            out.push((a, k - a));
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

impl LocalFit {
    /// `∂ₓᵃ ∂ᵧᵇ` of the fitted polynomial at the center.
    pub fn partial(&self, a: usize, b: usize) -> f64 {
        if a + b > self.degree {
            return 0.0;
        }
        let pos = monomials(self.degree).iter().position(|&m| m == (a, b)).expect("monomial present");
        factorial(a) * factorial(b) * self.coeffs[pos] / self.scale.powi((a + b) as i32)
    }

    /// Mixed directional derivative `∂_{d₁} ⋯ ∂_{d_k}` at the center.
    pub fn directional(&self, dirs: &[Vec2]) -> f64 {
        let k = dirs.len();
        // weights[a] multiplies ∂ₓᵃ ∂ᵧ^{k−a}
        let mut weights = vec![0.0; k + 1];
        weights[0] = 1.0;
        for (step, d) in dirs.iter().enumerate() {
            for a in (0..=step).rev() {
                let w = weights[a];
                weights[a + 1] += w * d.x;
                weights[a] = w * d.y;
            }
        }
        weights.iter().enumerate().map(|(a, &w)| w * self.partial(a, k - a)).sum()
    }

    /// `(f, ∂_ν f, ∂²_ν f, ∂³_ν f)` at the center.
    pub fn normal_jet(&self, nu: Vec2) -> [f64; 4] {
        [
            self.directional(&[]),
            self.directional(&[nu]),
            self.directional(&[nu, nu]),
            self.directional(&[nu, nu, nu]),
        ]
    }
}

/// Least-squares polynomial fit around `p` using only nodes strictly on one side of Γ.
pub fn one_sided_fit(field: &GridField, cache: &GeometryCache, p: Vec2, side: Side, opts: FitOptions) -> Result<LocalFit> {
    let grid = field.grid();
    let h = grid.h();
    let radius = opts.radius_cells * h;
    let rect = grid.rect();
    if rect.inner_distance(p) < radius {
        return Err(Error::ProbeLeavesDomain { x: p.x, y: p.y });
    }
    let sign = match side {
        Side::Inner => -1.0,
        Side::Outer => 1.0,
        Side::NearInterface => {
            return Err(Error::InvalidArgument("a one-sided fit needs the inner or outer side".into()));
        }
    };
    let min_offset = opts.min_offset_cells * h;
    let (i0, i1) = grid.x_range(p.x - radius, p.x + radius);
    let (j0, j1) = grid.y_range(p.y - radius, p.y + radius);
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let x = grid.point(i, j);
            if (x - p).norm() > radius {
                continue;
            }
            let d = cache.node(i, j).distance;
            if d * sign >= min_offset {
                pts.push((x - p) / radius);
                vals.push(field.get(i, j));
            }
        }
    }
    let basis = monomials(opts.degree);
    let needed = 2 * basis.len();
    if pts.len() < needed {
        return Err(Error::ProbeCrossesInterface { x: p.x, y: p.y, found: pts.len(), needed });
    }
    let a = DMatrix::from_fn(pts.len(), basis.len(), |r, c| {
        let (ea, eb) = basis[c];
        pts[r].x.powi(ea as i32) * pts[r].y.powi(eb as i32)
    });
    let b = DVector::from_vec(vals);
    let coeffs = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| Error::DegenerateFit(format!("local least squares failed: {e}")))?;
    Ok(LocalFit { center: p, scale: radius, degree: opts.degree, coeffs: coeffs.iter().copied().collect(), nodes_used: pts.len() })
}

/// One-sided `(f, ∂_ν f, ∂²_ν f, ∂³_ν f)` at a point of Γ, entries above `max_order` are zero.
pub fn one_sided_value_and_derivatives(
    field: &GridField,
    cache: &GeometryCache,
    p: Vec2,
    nu: Vec2,
    side: Side,
    max_order: usize,
) -> Result<[f64; 4]> {
    if max_order > 3 {
        return Err(Error::InvalidArgument(format!("max_order {max_order} exceeds 3")));
    }
    let fit = one_sided_fit(field, cache, p, side, FitOptions::for_order(max_order))?;
    let mut jet = fit.normal_jet(nu);
    for v in jet.iter_mut().skip(max_order + 1) {
        *v = 0.0;
    }
    Ok(jet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_geometry_cache;

    fn square(n: usize) -> Grid {
        Grid::new(Rect::centered_square(1.0), n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(Rect::centered_square(1.0), 16).is_err());
        assert!(Grid::new(Rect::new(0.0, 2.0, 0.0, 1.0).unwrap(), 33).is_err());
        let g = square(65);
        assert_eq!(g.h(), 2.0 / 64.0);
        assert_eq!(g.point(32, 32), Vec2::zeros());
    }

    #[test]
    fn laplacian_examples() {
        let g = square(33);
        let check = |f: GridField, expect: &dyn Fn(Vec2) -> f64| {
            let lap = f.apply_laplacian();
            for j in 1..g.n() - 1 {
                for i in 1..g.n() - 1 {
                    let e = expect(g.point(i, j));
                    assert!((lap.get(i, j) - e).abs() <= 1e-9 * (1.0 + e.abs()), "{} vs {e}", lap.get(i, j));
                }
            }
        };
        check(GridField::from_fn(&g, |p| p.x * p.x + p.y * p.y), &|_| 4.0);
        check(GridField::from_fn(&g, |_| 3.5), &|_| 0.0);
        check(GridField::from_fn(&g, |p| p.x.powi(3)), &|p| 6.0 * p.x);
        let f = GridField::from_fn(&g, |p| p.x + 7.0);
        assert_eq!(f.apply_laplacian().get(0, 5), f.get(0, 5));
    }

    #[test]
    fn one_sided_abs_distance_circle() {
        let g = square(257);
        let c = Curve::circle(Vec2::zeros(), 0.5).unwrap();
        let cache = build_geometry_cache(&c, &g).unwrap();
        let f = GridField::from_fn(&g, |x| ((x.norm() - 0.5) as f64).abs());
        let p = Vec2::new(0.5, 0.0);
        let nu = Vec2::new(1.0, 0.0);
        let out = one_sided_value_and_derivatives(&f, &cache, p, nu, Side::Outer, 1).unwrap();
        assert!(out[0].abs() < 1e-3 && (out[1] - 1.0).abs() < 1e-3, "{out:?}");
        let inn = one_sided_value_and_derivatives(&f, &cache, p, nu, Side::Inner, 1).unwrap();
        assert!(inn[0].abs() < 1e-3 && (inn[1] + 1.0).abs() < 1e-3, "{inn:?}");
    }

    #[test]
    fn one_sided_linear_field() {
        let g = square(257);
        let c = Curve::circle(Vec2::zeros(), 0.5).unwrap();
        let cache = build_geometry_cache(&c, &g).unwrap();
        let f = GridField::from_fn(&g, |x| x.x);
        for side in [Side::Inner, Side::Outer] {
            let out = one_sided_value_and_derivatives(&f, &cache, Vec2::new(0.5, 0.0), Vec2::new(1.0, 0.0), side, 3).unwrap();
            let expect = [0.5, 1.0, 0.0, 0.0];
            for k in 0..4 {
                assert!((out[k] - expect[k]).abs() < 1e-8, "{out:?}");
            }
        }
    }

    #[test]
    fn probe_leaving_domain_is_rejected() {
        let g = square(65);
        let c = Curve::circle(Vec2::zeros(), 0.9).unwrap();
        let cache = build_geometry_cache(&c, &g).unwrap();
        let f = GridField::zeros(&g);
        let err = one_sided_value_and_derivatives(&f, &cache, Vec2::new(0.9, 0.0), Vec2::new(1.0, 0.0), Side::Outer, 3);
        assert!(matches!(err, Err(Error::ProbeLeavesDomain { .. })));
    }
}
