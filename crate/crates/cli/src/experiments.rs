//! Studies behind each command: pure functions from parameters to result tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use polylab::altcaf::{altcaf_regularity_report, energy_scan, verify_euler_lagrange, AltCafOutcome, AltCafRegularity, EnergyScan, EulerLagrangeReport};
use polylab::analysis::{convergence_order, jump_scan_cascade, max_error, regularity_sweep, sbv_profile, jump_scan, JumpReport, RegularitySweep, TvReport};
use polylab::assembly::{validate_hessian_identity_all, Bump, Corrector, SurfaceDensity};
use polylab::geometry::{tube_radius, Curve, GeometryCache, Rect};
use polylab::grid::{Grid, GridField};
use polylab::oracle::{radial_polyharmonic_exact, weakform_residual, RadialBump, RadialSolution};
use polylab::solve::{solve_navier_cascade, BoundaryFn, CascadeSolution, InterfaceSetup, Method, SolveOptions, SolveReport};
use polylab::{Result, Vec2};

/// Hessian-identity residuals for one grid; `residuals[b][p]` for bump `b`, pair `p`.
#[derive(Clone, Debug, Serialize)]
pub struct Lemma23Row {
    pub n: usize,
    pub h: f64,
    pub residuals: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma23Study {
    pub bumps: Vec<Bump>,
    pub rows: Vec<Lemma23Row>,
    /// `orders[b][p]`; `None` when every residual is below the fit floor.
    pub orders: Vec<[Option<f64>; 3]>,
}

impl Lemma23Study {
    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().flatten().flatten().copied().reduce(f64::min)
    }
}

/// Random bumps inside the tube, reproducible from `seed`.
pub fn tube_bumps(curve: &Curve, eps: f64, count: usize, seed: u64) -> Vec<Bump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0.0..curve.period());
            let s = rng.gen_range(-0.15..0.15) * eps;
            let radius = rng.gen_range(0.8..0.9) * (eps - s.abs());
            let amplitude = rng.gen_range(0.5..2.0);
            Bump { center: curve.point(t) + curve.normal(t) * s, radius, amplitude }
        })
        .collect()
}

/// Residual of the distributional Hessian identity of `Q̃|d|/2` under refinement.
pub fn lemma23_study(curve: &Curve, q: &SurfaceDensity, rect: &Rect, ns: &[usize], bumps: &[Bump]) -> Result<Lemma23Study> {
    let eps = tube_radius(curve, rect)?;
    let corrector = Corrector::new(curve.clone(), q.clone(), eps);
    let rows = ns
        .iter()
        .map(|&n| {
            let grid = Grid::new(*rect, n)?;
            let residuals =
                bumps.iter().map(|b| validate_hessian_identity_all(&corrector, b, &grid)).collect::<Result<Vec<_>>>()?;
            Ok(Lemma23Row { n, h: grid.h(), residuals })
        })
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let orders = (0..bumps.len())
        .map(|b| {
            [0, 1, 2].map(|p| {
                let errs: Vec<f64> = rows.iter().map(|r| r.residuals[b][p]).collect();
                convergence_order(&errs, &hs).ok()
            })
        })
        .collect();
    Ok(Lemma23Study { bumps: bumps.to_vec(), rows, orders })
}

/// Boundary data `(−Δ)^j u` for every level, from an exact radial solution centered at the origin.
pub fn oracle_boundary(sol: &RadialSolution) -> Vec<Box<dyn Fn(Vec2) -> f64 + Sync + '_>> {
    (0..sol.m).map(|j| Box::new(move |x: Vec2| sol.level_at(j, x.x, x.y)) as Box<dyn Fn(Vec2) -> f64 + Sync>).collect()
}

/// One grid of a convergence study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    /// Max error of `u` over interior nodes.
    pub max_error: f64,
    /// Max error of `u` over nodes with `|d| ≤ 0.1`.
    pub near_error: f64,
    pub reports: Vec<SolveReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub m: usize,
    pub method: Method,
    pub rows: Vec<ConvergenceRow>,
    pub order: f64,
    pub near_order: f64,
}

impl ConvergenceStudy {
    pub fn error_at(&self, n: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.max_error)
    }
}

/// Solves the radial model problem `(−Δ)^m u = q·H¹⌞{|x| = ρ}` with oracle boundary data.
pub fn solve_radial_case(
    sol: &RadialSolution,
    setup: &InterfaceSetup,
    method: Method,
    opts: &SolveOptions,
) -> Result<CascadeSolution> {
    let bcs = oracle_boundary(sol);
    let refs: Vec<BoundaryFn> = bcs.iter().map(|b| b.as_ref() as BoundaryFn).collect();
    solve_navier_cascade(sol.m, setup, &SurfaceDensity::constant(sol.q), &refs, method, opts)
}

/// Error of the cascade solution against the radial oracle on each grid of `ns`.
pub fn convergence_study(
    m: usize,
    q: f64,
    rho: f64,
    rect: &Rect,
    ns: &[usize],
    method: Method,
    opts: &SolveOptions,
) -> Result<ConvergenceStudy> {
    let sol = radial_polyharmonic_exact(m, q, rho, &vec![0.0; m])?;
    let curve = Curve::circle(Vec2::zeros(), rho)?;
    let rows = par_cases(ns.to_vec(), |n| {
            let setup = InterfaceSetup::new(Grid::new(*rect, n)?, curve.clone())?;
            let cas = solve_radial_case(&sol, &setup, method, opts)?;
            let exact = |x: Vec2| sol.u(x.norm());
            let nodes = setup.cache.nodes();
            Ok(ConvergenceRow {
                n,
                h: setup.grid.h(),
                max_error: max_error(cas.u(), exact, |_| true),
                near_error: max_error(cas.u(), exact, |idx| nodes[idx].distance.abs() <= 0.1),
                reports: cas.reports,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let order = convergence_order(&rows.iter().map(|r| r.max_error).collect::<Vec<_>>(), &hs)?;
    let near_order = convergence_order(&rows.iter().map(|r| r.near_error).collect::<Vec<_>>(), &hs)?;
    Ok(ConvergenceStudy { m, method, rows, order, near_order })
}

/// Solves `(−Δ)^m u = Q·H¹⌞Γ` with homogeneous Navier data.
pub fn solve_zero_navier(m: usize, setup: &InterfaceSetup, q: &SurfaceDensity, method: Method, opts: &SolveOptions) -> Result<CascadeSolution> {
    let zero = |_: Vec2| 0.0;
    let refs: Vec<BoundaryFn> = vec![&zero; m];
    solve_navier_cascade(m, setup, q, &refs, method, opts)
}

/// Jump-law check `[∂^{2m−1}_ν u] = (−1)^m Q` on one configuration.
pub fn jump_study(
    m: usize,
    setup: &InterfaceSetup,
    q: &SurfaceDensity,
    n_probes: usize,
    method: Method,
    opts: &SolveOptions,
) -> Result<JumpReport> {
    let sol = solve_zero_navier(m, setup, q, method, opts)?;
    jump_scan_cascade(&sol, &setup.cache, &setup.curve, q, n_probes)
}

/// Off-Γ third differences and cross-Γ fourth differences of `u` for `m = 2`.
#[derive(Clone, Debug, Serialize)]
pub struct RegularityStudy {
    pub sweep: RegularitySweep,
    pub jump: JumpReport,
}

pub fn regularity_study(
    m: usize,
    curve: &Curve,
    q: &SurfaceDensity,
    rect: &Rect,
    ns: &[usize],
    n_probes: usize,
    method: Method,
    opts: &SolveOptions,
) -> Result<RegularityStudy> {
    let solved = par_cases(ns.to_vec(), |n| -> Result<_> {
        let setup = InterfaceSetup::new(Grid::new(*rect, n)?, curve.clone())?;
        let sol = solve_zero_navier(m, &setup, q, method, opts)?;
        Ok((setup, sol))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (setups, sols): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
    let pairs: Vec<(&GridField, &GeometryCache)> = sols.iter().zip(&setups).map(|(s, st)| (s.u(), &st.cache)).collect();
    let sweep = regularity_sweep(&pairs, 2 * m - 1)?;
    let last = setups.len() - 1;
    let jump = jump_scan_cascade(&sols[last], &setups[last].cache, curve, q, n_probes)?;
    Ok(RegularityStudy { sweep, jump })
}

/// TV of the third-derivative fields of `u` for `m = 2`.
#[derive(Clone, Debug, Serialize)]
pub struct TvStudy {
    pub n: usize,
    /// Components `∂²ₓₓu`, `∂²ₓᵧu`, `∂²ᵧᵧu`.
    pub components: [TvReport; 3],
    pub jump: JumpReport,
}

pub fn tv_study(
    setup: &InterfaceSetup,
    q: &SurfaceDensity,
    n_probes: usize,
    tube_cells: f64,
    method: Method,
    opts: &SolveOptions,
) -> Result<TvStudy> {
    let sol = solve_zero_navier(2, setup, q, method, opts)?;
    let scan = jump_scan(sol.u(), &setup.cache, &setup.curve, q, n_probes, 3, 1.0)?;
    let components = sbv_profile(sol.u(), &setup.cache, &scan, &setup.curve, q, tube_cells);
    Ok(TvStudy { n: setup.grid.n(), components, jump: scan })
}

/// Oracle self-checks: weak-form residual and continuity through order `2m − 2`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub m: usize,
    pub weakform_residual: f64,
    pub continuity_defect: f64,
    pub top_jump: f64,
}

pub fn oracle_check(m: usize, q: f64, rho: f64) -> Result<OracleCheck> {
    let sol = radial_polyharmonic_exact(m, q, rho, &vec![0.0; m])?;
    let bumps = [
        RadialBump { center: rho, radius: 0.3, amplitude: 1.0 },
        RadialBump { center: rho + 0.1, radius: 0.25, amplitude: -0.7 },
        RadialBump { center: 0.35, radius: 0.3, amplitude: 1.3 },
    ];
    let weak = bumps.iter().map(|b| weakform_residual(&sol, b)).collect::<Result<Vec<_>>>()?;
    Ok(OracleCheck {
        m,
        weakform_residual: weak.into_iter().fold(0.0, f64::max),
        continuity_defect: sol.continuity_defect(),
        top_jump: sol.jump(2 * m - 1),
    })
}

/// Radial Alt-Caffarelli run: scan, stationarity and regularity checks.
#[derive(Clone, Debug, Serialize)]
pub struct AltCafStudy {
    pub u0: f64,
    #[serde(skip)]
    pub scan: EnergyScan,
    pub rho: Option<f64>,
    pub energy: f64,
    pub euler_lagrange: Option<EulerLagrangeReport>,
    pub regularity: Option<AltCafRegularity>,
}

pub fn altcaf_study(u0: f64, step: f64) -> Result<AltCafStudy> {
    let scan = energy_scan(u0, step)?;
    let (rho, energy, el, reg) = match &scan.outcome {
        AltCafOutcome::Interior(sol) => {
            (Some(sol.rho()), sol.energy, Some(verify_euler_lagrange(sol)?), Some(altcaf_regularity_report(sol)))
        }
        AltCafOutcome::Trivial { energy, .. } => (None, *energy, None, None),
    };
    Ok(AltCafStudy { u0, scan, rho, energy, euler_lagrange: el, regularity: reg })
}

/// `max |−Δ_h v_j − v_{j+1}|` over interior nodes and lower levels, relative to `max |v_{j+1}|`.
pub fn cascade_consistency(sol: &CascadeSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..sol.m - 1 {
        let lap = sol.level(j).apply_laplacian();
        let next = sol.level(j + 1);
        let grid = next.grid();
        let scale = next.max_abs().max(f64::MIN_POSITIVE);
        for jj in 1..grid.n() - 1 {
            for ii in 1..grid.n() - 1 {
                worst = worst.max((lap.get(ii, jj) + next.get(ii, jj)).abs() / scale);
            }
        }
    }
    worst
}

/// Runs independent cases on the current rayon pool, keeping input order.
pub fn par_cases<T: Send, R: Send>(cases: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    cases.into_par_iter().map(f).collect()
}
