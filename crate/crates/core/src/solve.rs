//! Linear solvers for `−Δ_h`, the measure Poisson problem, and the Navier cascade.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_laplacian, build_corrector, surface_load_collocation, surface_load_regularized, CorrectorBundle,
    SparseOperator, SurfaceDensity,
};
use crate::error::{Error, Result};
use crate::geometry::{build_geometry_cache, tube_radius, Curve, GeometryCache};
use crate::grid::{Grid, GridField};
use crate::Vec2;

/// Boundary data as a function of position.
pub type BoundaryFn<'a> = &'a (dyn Fn(Vec2) -> f64 + Sync);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DirectMeasure,
    Corrector,
    Regularized,
    /// Plain Poisson solve with a bounded source (lower cascade levels).
    Source,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::DirectMeasure => "direct-measure",
            Method::Corrector => "corrector",
            Method::Regularized => "regularized",
            Method::Source => "source",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Jacobi-preconditioned conjugate gradients.
    Cg,
    /// Fast diagonalization by discrete sine transforms.
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub method: Method,
    pub backend: Backend,
    pub wall_time_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative residual tolerance; `None` selects 1e-10 for n ≤ 257 and 1e-9 above.
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub backend: Backend,
    /// Half-width of the regularized delta, in cells.
    pub reg_width_cells: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: None, max_iter: None, backend: Backend::Spectral, reg_width_cells: 2.0 }
    }
}

impl SolveOptions {
    pub fn cg() -> Self {
        Self { backend: Backend::Cg, ..Self::default() }
    }

    pub fn tolerance(&self, n: usize) -> f64 {
        self.tol.unwrap_or(if n <= 257 { 1e-10 } else { 1e-9 })
    }
}

const CHUNK: usize = 4096;

/// Dot product with a fixed chunked summation order, independent of thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> =
        a.par_chunks(CHUNK).zip(b.par_chunks(CHUNK)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum()).collect();
    partial.iter().sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn relative_residual(op: &SparseOperator, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    op.apply(x, &mut ax);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| q - p).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Jacobi-preconditioned conjugate gradients on interior unknowns.
pub fn cg_solve(op: &SparseOperator, rhs: &[f64], tol: f64, max_iter: usize) -> Result<(GridField, SolveReport)> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(Error::InvalidArgument(format!("tolerance {tol:e} outside [1e-12, 1e-4]")));
    }
    let start = Instant::now();
    let n = op.size();
    let mut x = vec![0.0; n];
    let nb = norm(rhs);
    let report = |iterations, relative_residual| SolveReport {
        iterations,
        relative_residual,
        method: Method::Source,
        backend: Backend::Cg,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if nb == 0.0 {
        return Ok((op.to_field(&x), report(0, 0.0)));
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut best = (x.clone(), 1.0);
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        let rel = norm(&r) / nb;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        if rel <= tol {
            // confirm with the true residual to guard against drift
            let true_rel = relative_residual(op, &x, rhs);
            if true_rel <= tol {
                return Ok((op.to_field(&x), report(it, true_rel)));
            }
            r = {
                let mut ax = vec![0.0; n];
                op.apply(&x, &mut ax);
                rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
            };
        }
        z.par_iter_mut().zip(&r).zip(&inv_diag).for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let field = op.to_field(&best.0);
    Err(Error::MaxIterExceeded { best: Box::new((field, report(max_iter, best.1))) })
}

/// Type-I discrete sine transform `X_k = Σ_j x_j sin(π j k/(M+1))` through a complex FFT of
/// length `2(M+1)`.
struct Dst1 {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    fn new(m: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (m + 1));
        Self { m, fft }
    }

    fn transform(&self, data: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let m = self.m;
        buf.clear();
        buf.resize(2 * (m + 1), Complex::new(0.0, 0.0));
        for j in 0..m {
            buf[j + 1] = Complex::new(data[j], 0.0);
            buf[2 * (m + 1) - 1 - j] = Complex::new(-data[j], 0.0);
        }
        self.fft.process(buf);
        for k in 0..m {
            data[k] = -0.5 * buf[k + 1].im;
        }
    }
}

/// Exact solve of `A x = b` for the 5-point Dirichlet `−Δ_h` by sine-transform diagonalization.
pub fn spectral_solve(op: &SparseOperator, rhs: &[f64]) -> Result<(GridField, SolveReport)> {
    let start = Instant::now();
    let grid = op.grid();
    let m = grid.n() - 2;
    let h = grid.h();
    let dst = Dst1::new(m);
    let mut x = rhs.to_vec();
    let rows = |x: &mut Vec<f64>| {
        x.par_chunks_mut(m).for_each_init(Vec::new, |buf, row| dst.transform(row, buf));
    };
    let transpose = |x: &Vec<f64>| {
        let mut out = vec![0.0; m * m];
        for j in 0..m {
            for i in 0..m {
                out[i * m + j] = x[j * m + i];
            }
        }
        out
    };
    rows(&mut x);
    let mut xt = transpose(&x);
    rows(&mut xt);
    let lambda: Vec<f64> = (1..=m)
        .map(|k| {
            let s = (k as f64 * std::f64::consts::PI / (2.0 * (m + 1) as f64)).sin();
            4.0 / (h * h) * s * s
        })
        .collect();
    let scale = (2.0 / (m + 1) as f64).powi(2);
    // xt is indexed [k_x * m + k_y]
    xt.par_chunks_mut(m).enumerate().for_each(|(kx, row)| {
        for (ky, v) in row.iter_mut().enumerate() {
            *v *= scale / (lambda[kx] + lambda[ky]);
        }
    });
    rows(&mut xt);
    let mut x = transpose(&xt);
    rows(&mut x);
    let rel = relative_residual(op, &x, rhs);
    let report = SolveReport {
        iterations: 1,
        relative_residual: rel,
        method: Method::Source,
        backend: Backend::Spectral,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((op.to_field(&x), report))
}

/// Solves `A x = rhs` with the backend and tolerance from `opts`.
pub fn linear_solve(op: &SparseOperator, rhs: &[f64], opts: &SolveOptions) -> Result<(GridField, SolveReport)> {
    let n = op.grid().n();
    let tol = opts.tolerance(n);
    match opts.backend {
        Backend::Cg => cg_solve(op, rhs, tol, opts.max_iter.unwrap_or(20 * n)),
        Backend::Spectral => {
            let (f, rep) = spectral_solve(op, rhs)?;
            if rep.relative_residual > tol {
                return Err(Error::MaxIterExceeded { best: Box::new((f, rep)) });
            }
            Ok((f, rep))
        }
    }
}

/// Grid, curve, node geometry and tube radius shared by all solves on one configuration.
#[derive(Clone, Debug)]
pub struct InterfaceSetup {
    pub grid: Grid,
    pub curve: Curve,
    pub cache: GeometryCache,
    pub eps: f64,
}

impl InterfaceSetup {
    pub fn new(grid: Grid, curve: Curve) -> Result<Self> {
        let eps = tube_radius(&curve, &grid.rect())?;
        let cache = build_geometry_cache(&curve, &grid)?;
        Ok(Self { grid, curve, cache, eps })
    }
}

/// Solves `−Δv = Q·H¹⌞Γ` with `v = bc` on the boundary.
pub fn solve_measure_poisson(
    setup: &InterfaceSetup,
    q: &SurfaceDensity,
    bc: BoundaryFn,
    method: Method,
    opts: &SolveOptions,
) -> Result<(GridField, SolveReport)> {
    let start = Instant::now();
    let grid = &setup.grid;
    let (field, mut report) = match method {
        Method::DirectMeasure => {
            let op = assemble_laplacian(grid, bc);
            let load = surface_load_collocation(&setup.curve, q, grid)?;
            linear_solve(&op, &op.rhs_from_load(&load), opts)?
        }
        Method::Regularized => {
            let op = assemble_laplacian(grid, bc);
            let load = surface_load_regularized(&setup.cache, &setup.curve, q, opts.reg_width_cells, setup.eps)?;
            linear_solve(&op, &op.rhs_from_load(&load), opts)?
        }
        Method::Corrector => {
            let bundle = build_corrector(&setup.cache, &setup.curve, q, setup.eps)?;
            corrector_solve(setup, &bundle, bc, opts)?
        }
        Method::Source => {
            return Err(Error::InvalidArgument("the source method needs a bounded right-hand side".into()));
        }
    };
    report.method = method;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((field, report))
}

/// `v = w + h` with `−Δh = −r` and `h = bc − w` on the boundary; nodes whose stencil
/// crosses Γ use the stencil-consistent load.
fn corrector_solve(
    setup: &InterfaceSetup,
    bundle: &CorrectorBundle,
    bc: BoundaryFn,
    opts: &SolveOptions,
) -> Result<(GridField, SolveReport)> {
    let corrector = &bundle.corrector;
    let curve = &setup.curve;
    let remainder_bc = |x: Vec2| -> f64 {
        let w = match curve.project(x) {
            Ok(p) => corrector.eval(p.t, p.distance, p.curvature).w,
            Err(_) => 0.0,
        };
        bc(x) - w
    };
    let op = assemble_laplacian(&setup.grid, &remainder_bc);
    let h_grid = setup.grid.h();
    let nodes = setup.cache.nodes();
    let neg_r = GridField::from_values(
        &setup.grid,
        nodes.par_iter().map(|g| -corrector.stencil_residual(g, h_grid)).collect(),
    )?;
    let (h, report) = linear_solve(&op, &op.rhs_from_source(&neg_r), opts)?;
    let v = h.zip_with(&bundle.w, |a, b| a + b)?;
    Ok((v, report))
}

/// Solves `−Δv = f` with `v = bc` on the boundary.
pub fn solve_source_poisson(
    grid: &Grid,
    source: &GridField,
    bc: BoundaryFn,
    opts: &SolveOptions,
) -> Result<(GridField, SolveReport)> {
    let op = assemble_laplacian(grid, bc);
    linear_solve(&op, &op.rhs_from_source(source), opts)
}

/// Levels `v_j = (−Δ)^j u`, `j = 0..m`, of a Navier cascade solution.
#[derive(Clone, Debug)]
pub struct CascadeSolution {
    pub m: usize,
    pub method: Method,
    /// `levels[j] = v_j`; `levels[0] = u`.
    pub levels: Vec<GridField>,
    pub reports: Vec<SolveReport>,
}

impl CascadeSolution {
    pub fn u(&self) -> &GridField {
        &self.levels[0]
    }

    pub fn level(&self, j: usize) -> &GridField {
        &self.levels[j]
    }
}

pub const MAX_ORDER: usize = 4;

/// `(−Δ)^m u = Q·H¹⌞Γ` with `(−Δ)^j u = bcs[j]` on the boundary, by m Poisson solves.
pub fn solve_navier_cascade(
    m: usize,
    setup: &InterfaceSetup,
    q: &SurfaceDensity,
    bcs: &[BoundaryFn],
    method: Method,
    opts: &SolveOptions,
) -> Result<CascadeSolution> {
    if m == 0 || m > MAX_ORDER {
        return Err(Error::OrderUnsupported { m });
    }
    if bcs.len() != m {
        return Err(Error::InvalidArgument(format!("{} boundary functions given for order {m}", bcs.len())));
    }
    let mut levels = vec![GridField::zeros(&setup.grid); m];
    let mut reports = Vec::with_capacity(m);
    let (top, rep) = solve_measure_poisson(setup, q, bcs[m - 1], method, opts)?;
    levels[m - 1] = top;
    reports.push(rep);
    for j in (0..m - 1).rev() {
        let (v, mut rep) = solve_source_poisson(&setup.grid, &levels[j + 1], bcs[j], opts)?;
        rep.method = Method::Source;
        levels[j] = v;
        reports.push(rep);
    }
    reports.reverse();
    Ok(CascadeSolution { m, method, levels, reports })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(n: usize) -> Grid {
        Grid::new(Rect::centered_square(1.0), n).unwrap()
    }

    #[test]
    fn cg_recovers_known_field() {
        let g = square(33);
        let op = assemble_laplacian(&g, &|_| 0.0);
        let exact = GridField::from_fn(&g, |p| (3.0 * p.x).sin() * (1.0 - p.y * p.y) * (1.0 - p.x * p.x));
        let xe = op.restrict(&exact);
        let mut b = vec![0.0; op.size()];
        op.apply(&xe, &mut b);
        let (x, rep) = cg_solve(&op, &b, 1e-12, 1000).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let err = x.zip_with(&exact, |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(err < 1e-9 * exact.max_abs().max(1.0), "{err}");
    }

    #[test]
    fn zero_rhs_is_zero_iterations() {
        let g = square(17);
        let op = assemble_laplacian(&g, &|_| 0.0);
        let (x, rep) = cg_solve(&op, &vec![0.0; op.size()], 1e-10, 100).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(x.max_abs(), 0.0);
    }

    #[test]
    fn cg_iteration_bound_n129() {
        let g = square(129);
        let op = assemble_laplacian(&g, &|_| 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (a, b): (f64, f64) = (rng.gen_range(1.0..3.0), rng.gen_range(1.0..3.0));
        let src = GridField::from_fn(&g, |p| (a * p.x).cos() * (b * p.y).sin() + p.x * p.y);
        let (_, rep) = cg_solve(&op, &op.rhs_from_source(&src), 1e-10, 10_000).unwrap();
        assert!(rep.iterations <= 5 * 129, "{} iterations", rep.iterations);
    }

    #[test]
    fn max_iter_returns_best_iterate() {
        let g = square(65);
        let op = assemble_laplacian(&g, &|_| 0.0);
        let src = GridField::from_fn(&g, |p| p.x.exp());
        match cg_solve(&op, &op.rhs_from_source(&src), 1e-12, 3) {
            Err(Error::MaxIterExceeded { best }) => {
                assert_eq!(best.1.iterations, 3);
                assert!(best.0.is_finite());
            }
            other => panic!("expected MaxIterExceeded, got {other:?}"),
        }
    }

    #[test]
    fn spectral_matches_cg() {
        let g = square(65);
        let op = assemble_laplacian(&g, &|p| p.x * p.y + 1.0);
        let src = GridField::from_fn(&g, |p| (2.0 * p.x).sin() + p.y * p.y);
        let b = op.rhs_from_source(&src);
        let (xs, rs) = spectral_solve(&op, &b).unwrap();
        let (xc, _) = cg_solve(&op, &b, 1e-12, 10_000).unwrap();
        assert!(rs.relative_residual < 1e-12);
        let diff = xs.zip_with(&xc, |a, b| (a - b).abs()).unwrap().max_abs();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn dirichlet_harmonic_data_reproduced() {
        let g = square(33);
        for backend in [Backend::Cg, Backend::Spectral] {
            let opts = SolveOptions { backend, tol: Some(1e-12), ..SolveOptions::default() };
            for f in [(|p: Vec2| p.x + p.y) as fn(Vec2) -> f64, |p: Vec2| p.x * p.x - p.y * p.y] {
                let (v, _) = solve_source_poisson(&g, &GridField::zeros(&g), &f, &opts).unwrap();
                let exact = GridField::from_fn(&g, f);
                assert!(v.zip_with(&exact, |a, b| (a - b).abs()).unwrap().max_abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_density_gives_zero_solution() {
        let g = square(65);
        let setup = InterfaceSetup::new(g, Curve::circle(Vec2::zeros(), 0.5).unwrap()).unwrap();
        for method in [Method::DirectMeasure, Method::Corrector, Method::Regularized] {
            let (v, _) =
                solve_measure_poisson(&setup, &SurfaceDensity::constant(0.0), &|_| 0.0, method, &SolveOptions::cg()).unwrap();
            assert_eq!(v.max_abs(), 0.0);
        }
    }

    #[test]
    fn cascade_harmonic_biharmonic() {
        let g = square(65);
        let setup = InterfaceSetup::new(g, Curve::circle(Vec2::zeros(), 0.5).unwrap()).unwrap();
        let f = |p: Vec2| p.x * p.x - p.y * p.y;
        let z = |_: Vec2| 0.0;
        let sol = solve_navier_cascade(
            2,
            &setup,
            &SurfaceDensity::constant(0.0),
            &[&f, &z],
            Method::Corrector,
            &SolveOptions::default(),
        )
        .unwrap();
        let exact = GridField::from_fn(&setup.grid, f);
        assert!(sol.u().zip_with(&exact, |a, b| (a - b).abs()).unwrap().max_abs() < 1e-10);
        assert!(matches!(
            solve_navier_cascade(5, &setup, &SurfaceDensity::constant(0.0), &[&z as BoundaryFn; 5], Method::Corrector, &SolveOptions::default()),
            Err(Error::OrderUnsupported { m: 5 })
        ));
    }
}
