//! Interface curves, nearest-point projection, and per-node signed-distance data.
//!
//! All curves are closed, counterclockwise, and given by analytic parametrizations on
//! `t ∈ [0, 2π)`. The signed distance is negative inside the enclosed region and the
//! normal points out of it.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::Vec2;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) || x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidGrid(format!("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    /// The square `(-half, half)²`.
    pub fn centered_square(half: f64) -> Self {
        Self { x0: -half, x1: half, y0: -half, y1: half }
    }

    /// Distance from `p` to the rectangle boundary, negative when `p` lies outside.
    pub fn inner_distance(&self, p: Vec2) -> f64 {
        (p.x - self.x0).min(self.x1 - p.x).min(p.y - self.y0).min(self.y1 - p.y)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.inner_distance(p) >= 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineMode {
    pub k: u32,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CurveKind {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
    /// `r(θ) = r0 + Σ aₖ cos(kθ)` in polar form about the center.
    FourierStar { r0: f64, modes: Vec<CosineMode> },
}

/// A closed, simple, C² planar curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub center: Vec2,
    pub kind: CurveKind,
}

/// Result of projecting a point onto a curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub t: f64,
    pub foot: Vec2,
    /// Signed distance: negative inside.
    pub distance: f64,
    pub normal: Vec2,
    pub curvature: f64,
}

const COARSE_SAMPLES: usize = 256;
const DENSE_SAMPLES: usize = 2048;

impl Curve {
    pub fn circle(center: Vec2, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidCurve(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Self { center, kind: CurveKind::Circle { radius } })
    }

    pub fn ellipse(center: Vec2, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidCurve(format!("ellipse semi-axes must be positive, got {a}, {b}")));
        }
        Ok(Self { center, kind: CurveKind::Ellipse { a, b } })
    }

    pub fn fourier_star(center: Vec2, r0: f64, modes: Vec<CosineMode>) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::InvalidCurve(format!("star base radius must be positive, got {r0}")));
        }
        if let Some(m) = modes.iter().find(|m| m.k == 0 || !m.amplitude.is_finite()) {
            return Err(Error::InvalidCurve(format!("invalid star mode k={} amplitude={}", m.k, m.amplitude)));
        }
        let curve = Self { center, kind: CurveKind::FourierStar { r0, modes } };
        // A polar graph with r > 0 is automatically simple.
        let min_r = (0..4096)
            .map(|i| curve.star_radius(TAU * i as f64 / 4096.0)[0])
            .fold(f64::INFINITY, f64::min);
        if min_r <= 0.0 {
            return Err(Error::InvalidCurve(format!("star radius function reaches {min_r:.3e} <= 0")));
        }
        Ok(curve)
    }

    /// Validates parameters for curves built from struct literals or deserialization.
    pub fn validated(self) -> Result<Self> {
        match self.kind {
            CurveKind::Circle { radius } => Self::circle(self.center, radius),
            CurveKind::Ellipse { a, b } => Self::ellipse(self.center, a, b),
            CurveKind::FourierStar { r0, modes } => Self::fourier_star(self.center, r0, modes),
        }
    }

    pub fn period(&self) -> f64 {
        TAU
    }

    /// r(θ) and its first three derivatives for the star form.
    fn star_radius(&self, t: f64) -> [f64; 4] {
        match &self.kind {
            CurveKind::Circle { radius } => [*radius, 0.0, 0.0, 0.0],
            CurveKind::FourierStar { r0, modes } => {
                let mut r = [*r0, 0.0, 0.0, 0.0];
                for m in modes {
                    let k = m.k as f64;
                    let (s, c) = (k * t).sin_cos();
                    r[0] += m.amplitude * c;
                    r[1] -= m.amplitude * k * s;
                    r[2] -= m.amplitude * k * k * c;
                    r[3] += m.amplitude * k * k * k * s;
                }
                r
            }
            CurveKind::Ellipse { .. } => unreachable!("ellipse has no polar radius form"),
        }
    }

    /// γ(t), γ′(t), γ″(t), γ‴(t).
    pub fn jet(&self, t: f64) -> [Vec2; 4] {
        match &self.kind {
            CurveKind::Ellipse { a, b } => {
                let (s, c) = t.sin_cos();
                [
                    self.center + Vec2::new(a * c, b * s),
                    Vec2::new(-a * s, b * c),
                    Vec2::new(-a * c, -b * s),
                    Vec2::new(a * s, -b * c),
                ]
            }
            _ => {
                let [r, r1, r2, r3] = self.star_radius(t);
                let (s, c) = t.sin_cos();
                let er = Vec2::new(c, s);
                let et = Vec2::new(-s, c);
                [
                    self.center + er * r,
                    er * r1 + et * r,
                    er * (r2 - r) + et * (2.0 * r1),
                    er * (r3 - 3.0 * r1) + et * (3.0 * r2 - r),
                ]
            }
        }
    }

    pub fn point(&self, t: f64) -> Vec2 {
        self.jet(t)[0]
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.jet(t)[1].norm()
    }

    pub fn tangent(&self, t: f64) -> Vec2 {
        self.jet(t)[1].normalize()
    }

    /// Unit normal pointing out of the enclosed region.
    pub fn normal(&self, t: f64) -> Vec2 {
        let d = self.jet(t)[1];
        Vec2::new(d.y, -d.x) / d.norm()
    }

    /// Signed curvature, positive for convex counterclockwise curves.
    pub fn curvature(&self, t: f64) -> f64 {
        let [_, d1, d2, _] = self.jet(t);
        cross(d1, d2) / d1.norm().powi(3)
    }

    /// Derivative of the curvature with respect to arc length.
    pub fn curvature_arclength_derivative(&self, t: f64) -> f64 {
        let [_, d1, d2, d3] = self.jet(t);
        let s = d1.norm();
        let kappa = cross(d1, d2) / s.powi(3);
        let s_t = d1.dot(&d2) / s;
        let kappa_t = cross(d1, d3) / s.powi(3) - 3.0 * kappa * s_t / s;
        kappa_t / s
    }

    /// Arc length by the periodic trapezoidal rule (spectrally accurate).
    pub fn length(&self) -> f64 {
        let n = 4096;
        let dt = TAU / n as f64;
        (0..n).map(|i| self.speed(i as f64 * dt)).sum::<f64>() * dt
    }

    pub fn max_abs_curvature(&self) -> f64 {
        match &self.kind {
            CurveKind::Circle { radius } => 1.0 / radius,
            _ => refine_max(|t| self.curvature(t).abs(), 8192),
        }
    }

    /// Distance from the curve to the rectangle boundary, negative if the curve leaves it.
    pub fn distance_to_rect_boundary(&self, rect: &Rect) -> f64 {
        -refine_max(|t| -rect.inner_distance(self.point(t)), 8192)
    }

    /// Nearest-point projection. Global: coarse scan, safeguarded Newton on the best
    /// candidates, dense-scan fallback.
    pub fn project(&self, x: Vec2) -> Result<Projection> {
        if let CurveKind::Circle { radius } = self.kind {
            return Ok(self.project_circle(x, radius));
        }
        self.project_scanned(x, COARSE_SAMPLES)
            .or_else(|| self.project_scanned(x, DENSE_SAMPLES))
            .ok_or(Error::NoConvergence { x: x.x, y: x.y })
    }

    /// Projection using the scan table of a [`CurveSampler`].
    fn project_with_table(&self, x: Vec2, table: &[Vec2]) -> Result<Projection> {
        if let CurveKind::Circle { radius } = self.kind {
            return Ok(self.project_circle(x, radius));
        }
        self.project_from_samples(x, table)
            .or_else(|| self.project_scanned(x, DENSE_SAMPLES))
            .ok_or(Error::NoConvergence { x: x.x, y: x.y })
    }

    /// Local projection starting from a nearby parameter. Only meaningful inside the tube
    /// where the projection is unique.
    pub fn project_near(&self, x: Vec2, hint: f64) -> Result<Projection> {
        if let CurveKind::Circle { radius } = self.kind {
            return Ok(self.project_circle(x, radius));
        }
        let g = |t: f64| self.foot_residual(x, t);
        let mut step = TAU / COARSE_SAMPLES as f64;
        for _ in 0..6 {
            let (a, b) = (hint - step, hint + step);
            if g(a) < 0.0 && g(b) > 0.0 {
                if let Some(t) = self.polish(x, a, b) {
                    return Ok(self.finish(x, t));
                }
            }
            step *= 2.0;
        }
        self.project(x)
    }

    fn project_circle(&self, x: Vec2, radius: f64) -> Projection {
        let v = x - self.center;
        let r = v.norm();
        let t = if r > 0.0 { v.y.atan2(v.x).rem_euclid(TAU) } else { 0.0 };
        let (s, c) = t.sin_cos();
        let normal = Vec2::new(c, s);
        Projection { t, foot: self.center + normal * radius, distance: r - radius, normal, curvature: 1.0 / radius }
    }

    /// `(γ(t) − x)·γ′(t)`: half the parameter derivative of the squared distance.
    fn foot_residual(&self, x: Vec2, t: f64) -> f64 {
        let [p, d1, _, _] = self.jet(t);
        (p - x).dot(&d1)
    }

    fn project_scanned(&self, x: Vec2, samples: usize) -> Option<Projection> {
        let table: Vec<Vec2> = (0..samples).map(|i| self.point(TAU * i as f64 / samples as f64)).collect();
        self.project_from_samples(x, &table)
    }

    fn project_from_samples(&self, x: Vec2, table: &[Vec2]) -> Option<Projection> {
        let n = table.len();
        let dt = TAU / n as f64;
        let dist2: Vec<f64> = table.iter().map(|p| (p - x).norm_squared()).collect();
        let mut candidates: Vec<usize> = (0..n)
            .filter(|&k| dist2[k] <= dist2[(k + n - 1) % n] && dist2[k] <= dist2[(k + 1) % n])
            .collect();
        candidates.sort_by(|&a, &b| dist2[a].total_cmp(&dist2[b]));
        let mut best: Option<Projection> = None;
        for &k in candidates.iter().take(4) {
            let t0 = k as f64 * dt;
            let (a, b) = (t0 - dt, t0 + dt);
            let (ga, gb) = (self.foot_residual(x, a), self.foot_residual(x, b));
            let t = if ga <= 0.0 && gb >= 0.0 {
                if ga == 0.0 {
                    Some(a)
                } else if gb == 0.0 {
                    Some(b)
                } else {
                    self.polish(x, a, b)
                }
            } else {
                None
            };
            if let Some(t) = t {
                let p = self.finish(x, t);
                if best.is_none_or(|q| p.distance.abs() < q.distance.abs()) {
                    best = Some(p);
                }
            }
        }
        best
    }

    /// Safeguarded Newton on the foot residual inside a sign-changing bracket.
    fn polish(&self, x: Vec2, mut a: f64, mut b: f64) -> Option<f64> {
        let mut t = 0.5 * (a + b);
        for _ in 0..200 {
            let [p, d1, d2, _] = self.jet(t);
            let g = (p - x).dot(&d1);
            let dg = d1.norm_squared() + (p - x).dot(&d2);
            let tol = 1e-13 * d1.norm() * (p - x).norm().max(self.scale());
            if g.abs() <= tol {
                return Some(t);
            }
            if g < 0.0 {
                a = t;
            } else {
                b = t;
            }
            let newton = t - g / dg;
            t = if dg > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if b - a < 1e-15 {
                return Some(t);
            }
        }
        None
    }

    fn scale(&self) -> f64 {
        match &self.kind {
            CurveKind::Circle { radius } => *radius,
            CurveKind::Ellipse { a, b } => a.max(*b),
            CurveKind::FourierStar { r0, .. } => *r0,
        }
    }

    fn finish(&self, x: Vec2, t: f64) -> Projection {
        let t = t.rem_euclid(TAU);
        let [foot, d1, d2, _] = self.jet(t);
        let speed = d1.norm();
        let normal = Vec2::new(d1.y, -d1.x) / speed;
        let offset = x - foot;
        let sign = if offset.dot(&normal) < 0.0 { -1.0 } else { 1.0 };
        Projection { t, foot, distance: sign * offset.norm(), normal, curvature: cross(d1, d2) / speed.powi(3) }
    }
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Maximum of a smooth periodic function by dense sampling plus golden-section refinement.
fn refine_max(f: impl Fn(f64) -> f64, samples: usize) -> f64 {
    let dt = TAU / samples as f64;
    let (k, _) = (0..samples)
        .map(|i| (i, f(i as f64 * dt)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let (mut a, mut b) = ((k as f64 - 1.0) * dt, (k as f64 + 1.0) * dt);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).max(f(k as f64 * dt))
}

/// Tube half-width ε = min(1/(2 max|κ|), dist(Γ, ∂Ω)/2).
pub fn tube_radius(curve: &Curve, domain: &Rect) -> Result<f64> {
    let dist = curve.distance_to_rect_boundary(domain);
    if dist <= 0.0 {
        return Err(Error::InterfaceTouchesBoundary { distance: dist });
    }
    Ok((0.5 / curve.max_abs_curvature()).min(0.5 * dist))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Inner,
    Outer,
    NearInterface,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Inner => "inner",
            Side::Outer => "outer",
            Side::NearInterface => "near-interface",
        }
    }
}

/// Cached projection data for one grid node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeGeometry {
    pub t: f64,
    pub distance: f64,
    pub foot: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
    pub side: Side,
}

impl NodeGeometry {
    pub fn is_inner(&self) -> bool {
        self.distance < 0.0
    }
}

/// Per-node signed distance, foot point, normal, curvature and side flag.
#[derive(Clone, Debug)]
pub struct GeometryCache {
    grid: Grid,
    nodes: Vec<NodeGeometry>,
}

impl GeometryCache {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodes(&self) -> &[NodeGeometry] {
        &self.nodes
    }

    pub fn node(&self, i: usize, j: usize) -> &NodeGeometry {
        &self.nodes[self.grid.index(i, j)]
    }

    pub fn at(&self, idx: usize) -> &NodeGeometry {
        &self.nodes[idx]
    }

    pub fn inner_count(&self) -> usize {
        self.nodes.iter().filter(|g| g.is_inner()).count()
    }

    /// CSV with columns `x,y,d,nu_x,nu_y,side`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,d,nu_x,nu_y,side")?;
        for (idx, g) in self.nodes.iter().enumerate() {
            let p = self.grid.point_at(idx);
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                p.x,
                p.y,
                g.distance,
                g.normal.x,
                g.normal.y,
                g.side.as_str()
            )?;
        }
        Ok(())
    }
}

/// Projects every grid node onto the curve.
pub fn build_geometry_cache(curve: &Curve, grid: &Grid) -> Result<GeometryCache> {
    let table: Vec<Vec2> = (0..COARSE_SAMPLES).map(|i| curve.point(TAU * i as f64 / COARSE_SAMPLES as f64)).collect();
    let projections: Vec<Projection> = (0..grid.len())
        .into_par_iter()
        .map(|idx| curve.project_with_table(grid.point_at(idx), &table))
        .collect::<Result<_>>()?;

    let n = grid.n();
    let mut nodes: Vec<NodeGeometry> = projections
        .iter()
        .map(|p| NodeGeometry {
            t: p.t,
            distance: p.distance,
            foot: p.foot,
            normal: p.normal,
            curvature: p.curvature,
            side: if p.distance < 0.0 { Side::Inner } else { Side::Outer },
        })
        .collect();
    for j in 0..n {
        for i in 0..n {
            let idx = grid.index(i, j);
            let d = projections[idx].distance;
            let mut near = d == 0.0;
            for (ni, nj) in grid.neighbors(i, j) {
                let dn = projections[grid.index(ni, nj)].distance;
                if (d < 0.0 && dn > 0.0) || (d > 0.0 && dn < 0.0) {
                    near = true;
                }
            }
            if near {
                nodes[idx].side = Side::NearInterface;
            }
        }
    }
    Ok(GeometryCache { grid: grid.clone(), nodes })
}

/// Parameter values `t_k = 2πk/n`, used for probes and curve quadrature.
pub fn uniform_parameters(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| 2.0 * PI * k as f64 / n as f64)
}
