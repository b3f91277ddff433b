//! Jump scans across Γ, regularity sweeps, total-variation profiles, and convergence orders.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::SurfaceDensity;
use crate::error::{Error, Result};
use crate::geometry::{Curve, GeometryCache, Side};
use crate::grid::{one_sided_fit, FitOptions, GridField, Probe, ProbeSet};
use crate::solve::CascadeSolution;
use crate::Vec2;

/// One probe of a jump scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeJump {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// `(f, ∂_ν f, ∂²_ν f, ∂³_ν f)` from the inner side.
    pub inner: [f64; 4],
    pub outer: [f64; 4],
    pub measured: f64,
    pub predicted: f64,
    /// Relative error when `|predicted| > 0`, else absolute error.
    pub error: f64,
    /// Jumps of `∂_ν∂_ν∂_τ`, `∂_ν∂_τ∂_τ`, `∂_τ∂_τ∂_τ` (third-order scans only).
    pub tangential: Option<[f64; 3]>,
    /// Jumps of `∂ₓₓₓ, ∂ₓₓᵧ, ∂ₓᵧᵧ, ∂ᵧᵧᵧ` (third-order scans only).
    pub cartesian: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedProbe {
    pub t: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpReport {
    /// Normal derivative order whose jump is measured.
    pub order: usize,
    pub probes: Vec<ProbeJump>,
    pub skipped: Vec<SkippedProbe>,
    pub max_error: f64,
    pub median_error: f64,
}

impl JumpReport {
    fn new(order: usize, probes: Vec<ProbeJump>, skipped: Vec<SkippedProbe>) -> Self {
        let mut errs: Vec<f64> = probes.iter().map(|p| p.error).collect();
        errs.sort_by(f64::total_cmp);
        let max_error = errs.last().copied().unwrap_or(f64::NAN);
        let median_error = median_sorted(&errs);
        Self { order, probes, skipped, max_error, median_error }
    }

    /// Largest tangential third-derivative jump relative to `|Q|` at the probe.
    pub fn max_tangential_ratio(&self, q: &SurfaceDensity, curve: &Curve) -> Option<f64> {
        self.probes
            .iter()
            .map(|p| p.tangential.map(|t| t.iter().fold(0.0f64, |m, v| m.max(v.abs())) / q.value(curve, p.t).abs()))
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.into_iter().fold(0.0, f64::max))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,y,inner_f,inner_d1,inner_d2,inner_d3,outer_f,outer_d1,outer_d2,outer_d3,measured,predicted,error")?;
        for p in &self.probes {
            let vals: Vec<f64> = [p.t, p.x, p.y]
                .into_iter()
                .chain(p.inner)
                .chain(p.outer)
                .chain([p.measured, p.predicted, p.error])
                .collect();
            let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Jump `outer − inner` of `∂^order_ν f` at equally spaced probes, compared against
/// `factor·Q(p)`.
pub fn jump_scan(
    field: &GridField,
    cache: &GeometryCache,
    curve: &Curve,
    q: &SurfaceDensity,
    n_probes: usize,
    order: usize,
    factor: f64,
) -> Result<JumpReport> {
    jump_scan_with(field, cache, curve, q, n_probes, order, factor, FitOptions::for_order(order.max(1)))
}

#[allow(clippy::too_many_arguments)]
pub fn jump_scan_with(
    field: &GridField,
    cache: &GeometryCache,
    curve: &Curve,
    q: &SurfaceDensity,
    n_probes: usize,
    order: usize,
    factor: f64,
    fit: FitOptions,
) -> Result<JumpReport> {
    if n_probes < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 probes, got {n_probes}")));
    }
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidArgument(format!("jump order {order} outside 1..=3")));
    }
    let probes = ProbeSet::uniform(curve, n_probes);
    let results: Vec<std::result::Result<ProbeJump, SkippedProbe>> = probes
        .probes
        .par_iter()
        .map(|pr| probe_jump(field, cache, curve, q, pr, order, factor, fit))
        .collect::<Result<_>>()?;
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(p) => ok.push(p),
            Err(s) => skipped.push(s),
        }
    }
    Ok(JumpReport::new(order, ok, skipped))
}

#[allow(clippy::too_many_arguments)]
fn probe_jump(
    field: &GridField,
    cache: &GeometryCache,
    curve: &Curve,
    q: &SurfaceDensity,
    pr: &Probe,
    order: usize,
    factor: f64,
    fit: FitOptions,
) -> Result<std::result::Result<ProbeJump, SkippedProbe>> {
    let fits = [Side::Inner, Side::Outer].map(|side| one_sided_fit(field, cache, pr.p, side, fit));
    let [inner, outer] = match fits {
        [Ok(a), Ok(b)] => [a, b],
        [Err(e), _] | [_, Err(e)] => {
            return match e {
                Error::ProbeLeavesDomain { .. } | Error::ProbeCrossesInterface { .. } => {
                    Ok(Err(SkippedProbe { t: pr.t, reason: e.to_string() }))
                }
                other => Err(other),
            }
        }
    };
    let ji = inner.normal_jet(pr.nu);
    let jo = outer.normal_jet(pr.nu);
    let measured = jo[order] - ji[order];
    let predicted = factor * q.value(curve, pr.t);
    let error = if predicted != 0.0 { (measured - predicted).abs() / predicted.abs() } else { measured.abs() };
    let (tangential, cartesian) = if order == 3 {
        let (n, t) = (pr.nu, pr.tau);
        let jump = |dirs: &[Vec2]| outer.directional(dirs) - inner.directional(dirs);
        let ex = Vec2::new(1.0, 0.0);
        let ey = Vec2::new(0.0, 1.0);
        (
            Some([jump(&[n, n, t]), jump(&[n, t, t]), jump(&[t, t, t])]),
            Some([jump(&[ex, ex, ex]), jump(&[ex, ex, ey]), jump(&[ex, ey, ey]), jump(&[ey, ey, ey])]),
        )
    } else {
        (None, None)
    };
    Ok(Ok(ProbeJump {
        t: pr.t,
        x: pr.p.x,
        y: pr.p.y,
        inner: ji,
        outer: jo,
        measured,
        predicted,
        error,
        tangential,
        cartesian,
    }))
}

/// Predicted jump factor of `[∂^{2m−1}_ν u]` in units of `Q`: `(−1)^m`.
pub fn jump_sign(m: usize) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Jump law `[∂^{2m−1}_ν u] = (−1)^m Q` on a cascade solution.
///
/// For `m = 1` the gradient jump of `u` is measured directly. For `m ≥ 2` the measurement
/// uses the level `v_{m−2} = (−Δ)^{m−2}u`: the terms of `∂^{2m−1}_ν u − (−1)^m ∂³_ν v_{m−2}`
/// involve tangential derivatives or lower normal orders and are continuous across Γ, so
/// `[∂^{2m−1}_ν u] = (−1)^m [∂³_ν v_{m−2}]`. The reported `measured` value is that product.
pub fn jump_scan_cascade(
    sol: &CascadeSolution,
    cache: &GeometryCache,
    curve: &Curve,
    q: &SurfaceDensity,
    n_probes: usize,
) -> Result<JumpReport> {
    let m = sol.m;
    if m == 1 {
        return jump_scan(sol.u(), cache, curve, q, n_probes, 1, -1.0);
    }
    let sign = jump_sign(m);
    let mut report = jump_scan(sol.level(m - 2), cache, curve, q, n_probes, 3, 1.0)?;
    for p in &mut report.probes {
        p.measured *= sign;
        p.predicted *= sign;
    }
    Ok(report)
}

/// Centered difference weights for `d^k/dx^k` on offsets `−⌈k/2⌉..=⌈k/2⌉` (k ≤ 4), second order.
pub fn centered_weights(k: usize) -> Vec<(i64, f64)> {
    match k {
        0 => vec![(0, 1.0)],
        1 => vec![(-1, -0.5), (1, 0.5)],
        2 => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => vec![(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => vec![(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => panic!("centered weights tabulated for k ≤ 4"),
    }
}

/// Tensor-product stencil for `∂ₓᵃ ∂ᵧᵇ`.
fn stencil(a: usize, b: usize) -> Vec<(i64, i64, f64)> {
    let mut out = Vec::new();
    for (dx, wx) in centered_weights(a) {
        for &(dy, wy) in &centered_weights(b) {
            out.push((dx, dy, wx * wy));
        }
    }
    out
}

/// `(value, crosses Γ)` of a stencil at node `(i, j)`, or `None` if it leaves the grid.
fn apply_stencil(f: &GridField, cache: &GeometryCache, st: &[(i64, i64, f64)], order: usize, i: usize, j: usize) -> Option<(f64, bool)> {
    let n = f.grid().n() as i64;
    let h = f.grid().h();
    let mut acc = 0.0;
    let (mut neg, mut pos) = (false, false);
    for &(dx, dy, w) in st {
        let (a, b) = (i as i64 + dx, j as i64 + dy);
        if a < 0 || b < 0 || a >= n || b >= n {
            return None;
        }
        let (a, b) = (a as usize, b as usize);
        acc += w * f.get(a, b);
        let d = cache.node(a, b).distance;
        if d < 0.0 {
            neg = true;
        } else {
            pos = true;
        }
    }
    Some((acc / h.powi(order as i32), neg && pos))
}

/// Centered-difference partial derivative field `∂ₓᵃ ∂ᵧᵇ f`; `None` where the stencil leaves
/// the grid.
pub fn difference_field(f: &GridField, cache: &GeometryCache, a: usize, b: usize) -> Vec<Option<f64>> {
    let st = stencil(a, b);
    let grid = f.grid();
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            apply_stencil(f, cache, &st, a + b, i, j).map(|v| v.0)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityRow {
    pub n: usize,
    pub h: f64,
    /// `max |∂ₓᵃ∂ᵧᵇ u|`, `a + b = k`, over stencils entirely on one side of Γ.
    pub sup_same_side: f64,
    /// `max |∂ₓ^{k+1} u|, |∂ᵧ^{k+1} u|` over stencils with nodes on both sides of Γ.
    pub max_cross: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularitySweep {
    pub order: usize,
    pub rows: Vec<RegularityRow>,
}

impl RegularitySweep {
    pub fn same_side_ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].sup_same_side / w[0].sup_same_side).collect()
    }

    pub fn cross_ratios(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].max_cross / w[0].max_cross).collect()
    }
}

/// Sup norms of order-k differences off Γ and order-(k+1) pure differences across Γ.
pub fn regularity_row(u: &GridField, cache: &GeometryCache, k: usize) -> RegularityRow {
    let grid = u.grid();
    let mixed: Vec<Vec<(i64, i64, f64)>> = (0..=k).map(|a| stencil(a, k - a)).collect();
    let pure = [stencil(k + 1, 0), stencil(0, k + 1)];
    let (sup, cross) = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            let mut s: f64 = 0.0;
            for st in &mixed {
                if let Some((v, false)) = apply_stencil(u, cache, st, k, i, j) {
                    s = s.max(v.abs());
                }
            }
            let mut c: f64 = 0.0;
            for st in &pure {
                if let Some((v, true)) = apply_stencil(u, cache, st, k + 1, i, j) {
                    c = c.max(v.abs());
                }
            }
            (s, c)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    RegularityRow { n: grid.n(), h: grid.h(), sup_same_side: sup, max_cross: cross }
}

/// Regularity rows for solutions on strictly refining grids.
pub fn regularity_sweep(solutions: &[(&GridField, &GeometryCache)], k: usize) -> Result<RegularitySweep> {
    if solutions.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 grids, got {}", solutions.len())));
    }
    if solutions.windows(2).any(|w| w[1].0.grid().n() <= w[0].0.grid().n()) {
        return Err(Error::InvalidArgument("grids must be strictly increasing".into()));
    }
    Ok(RegularitySweep { order: k, rows: solutions.iter().map(|(u, c)| regularity_row(u, c, k)).collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub total: f64,
    pub tube: f64,
    pub tube_fraction: f64,
    /// Line integral of measured jumps, if supplied.
    pub jump_estimate: Option<f64>,
    /// Line integral of predicted jump densities, if supplied.
    pub jump_predicted: Option<f64>,
}

/// Anisotropic discrete TV `Σ h(|f_E − f_C| + |f_N − f_C|)` over edges with both ends
/// defined; an edge counts toward the tube when either end has `|d| ≤ tube_cells·h`.
pub fn tv_profile(field: &[Option<f64>], cache: &GeometryCache, tube_cells: f64) -> TvReport {
    let grid = cache.grid();
    let n = grid.n();
    let h = grid.h();
    let band = tube_cells * h;
    let (total, tube) = (0..n)
        .into_par_iter()
        .map(|j| {
            let (mut total, mut tube) = (0.0, 0.0);
            for i in 0..n {
                let c = grid.index(i, j);
                let Some(fc) = field[c] else { continue };
                let in_c = cache.at(c).distance.abs() <= band;
                for nb in [(i + 1 < n).then(|| grid.index(i + 1, j)), (j + 1 < n).then(|| grid.index(i, j + 1))]
                    .into_iter()
                    .flatten()
                {
                    if let Some(fnb) = field[nb] {
                        let v = h * (fnb - fc).abs();
                        total += v;
                        if in_c || cache.at(nb).distance.abs() <= band {
                            tube += v;
                        }
                    }
                }
            }
            (total, tube)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    TvReport {
        total,
        tube,
        tube_fraction: if total > 0.0 { tube / total } else { 0.0 },
        jump_estimate: None,
        jump_predicted: None,
    }
}

/// Isotropic discrete TV `Σ h·|(f_E − f_C, f_N − f_C)|` over nodes with both neighbors.
pub fn tv_isotropic(field: &GridField) -> f64 {
    let grid = field.grid();
    let n = grid.n();
    let h = grid.h();
    let rows: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .map(|j| {
            (0..n - 1)
                .map(|i| {
                    let c = field.get(i, j);
                    h * (field.get(i + 1, j) - c).hypot(field.get(i, j + 1) - c)
                })
                .sum()
        })
        .collect();
    rows.iter().sum()
}

/// TV of the gradient of each second-derivative component `∂²ᵢⱼu`, `(i,j) ∈ {xx, xy, yy}`:
/// the fields `∂ₖ∂²ᵢⱼu` by centered differences, combined over `k`, with the jump-part line
/// integrals from a third-order jump scan.
pub fn sbv_profile(u: &GridField, cache: &GeometryCache, scan: &JumpReport, curve: &Curve, q: &SurfaceDensity, tube_cells: f64) -> [TvReport; 3] {
    let comps = [(3usize, 0usize), (2, 1), (1, 2), (0, 3)];
    let fields: Vec<Vec<Option<f64>>> = comps.iter().map(|&(a, b)| difference_field(u, cache, a, b)).collect();
    let tv: Vec<TvReport> = fields.iter().map(|f| tv_profile(f, cache, tube_cells)).collect();
    // ∂²ₓₓ → (xxx, xxy), ∂²ₓᵧ → (xxy, xyy), ∂²ᵧᵧ → (xyy, yyy)
    let groups = [[0usize, 1], [1, 2], [2, 3]];
    let np = scan.probes.len() + scan.skipped.len();
    let dt = std::f64::consts::TAU / np as f64;
    groups.map(|g| {
        let total = tv[g[0]].total + tv[g[1]].total;
        let tube = tv[g[0]].tube + tv[g[1]].tube;
        let mut est = 0.0;
        let mut pred = 0.0;
        for p in &scan.probes {
            let Some(cart) = p.cartesian else { continue };
            let ds = curve.speed(p.t) * dt;
            let nu = curve.normal(p.t);
            let qv = q.value(curve, p.t);
            for &c in &g {
                let (a, b) = comps[c];
                est += cart[c].abs() * ds;
                pred += (qv * nu.x.powi(a as i32) * nu.y.powi(b as i32)).abs() * ds;
            }
        }
        TvReport {
            total,
            tube,
            tube_fraction: if total > 0.0 { tube / total } else { 0.0 },
            jump_estimate: Some(est),
            jump_predicted: Some(pred),
        }
    })
}

/// Least-squares slope of `log e` against `log h`.
pub fn convergence_order(errors: &[f64], hs: &[f64]) -> Result<f64> {
    if errors.len() != hs.len() || errors.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 matching points, got {} and {}", errors.len(), hs.len())));
    }
    if let Some(e) = errors.iter().find(|e| !(**e >= 1e-13) || !e.is_finite()) {
        return Err(Error::DegenerateFit(format!("error {e:e} below 1e-13 or not finite")));
    }
    if hs.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::DegenerateFit("spacings must be positive".into()));
    }
    let x: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all spacings equal".into()));
    }
    Ok(sxy / sxx)
}

/// `max |f − exact|` over interior nodes selected by `keep`.
pub fn max_error(f: &GridField, exact: impl Fn(Vec2) -> f64 + Sync, keep: impl Fn(usize) -> bool + Sync) -> f64 {
    let grid = f.grid();
    (0..grid.len())
        .into_par_iter()
        .filter(|&idx| {
            let (i, j) = grid.coords(idx);
            !grid.is_boundary(i, j) && keep(idx)
        })
        .map(|idx| (f.values()[idx] - exact(grid.point_at(idx))).abs())
        .reduce(|| 0.0, f64::max)
}

/// `max |∇_h f|` by centered differences over interior nodes.
pub fn max_gradient(f: &GridField) -> f64 {
    let grid = f.grid();
    let n = grid.n();
    let h = grid.h();
    (1..n - 1)
        .into_par_iter()
        .map(|j| {
            (1..n - 1)
                .map(|i| {
                    let gx = (f.get(i + 1, j) - f.get(i - 1, j)) / (2.0 * h);
                    let gy = (f.get(i, j + 1) - f.get(i, j - 1)) / (2.0 * h);
                    gx.hypot(gy)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}
