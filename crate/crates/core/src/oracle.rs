//! Exact radial solutions of `(−Δ)^m u = q·H¹⌞{|x| = ρ}` with Navier data on the unit circle.
//!
//! Every level `v_j = (−Δ)^j u` is a finite sum of terms `c·r^p·(ln r)^e` with `e ∈ {0, 1}`,
//! separately on `r < ρ` and `r > ρ`. Levels are built top-down by exact radial
//! inverse Laplacians; adaptive quadrature of `u′(r) = −(1/r)∫₀^r s f(s) ds` cross-checks each
//! level.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Terms `c·r^p·(ln r)^e`, keyed by `(p, e)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadialPiece {
    terms: BTreeMap<(i32, u8), f64>,
}

fn falling(p: f64, n: usize) -> f64 {
    (0..n).fold(1.0, |acc, i| acc * (p - i as f64))
}

/// Derivative in `p` of the falling factorial `p(p−1)⋯(p−n+1)`.
fn falling_dp(p: f64, n: usize) -> f64 {
    (0..n).map(|i| (0..n).filter(|&l| l != i).fold(1.0, |acc, l| acc * (p - l as f64))).sum()
}

impl RadialPiece {
    pub fn add(&mut self, p: i32, log: bool, c: f64) {
        if c != 0.0 {
            *self.terms.entry((p, log as u8)).or_insert(0.0) += c;
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (i32, bool, f64)> + '_ {
        self.terms.iter().map(|(&(p, e), &c)| (p, e == 1, c))
    }

    pub fn has_log(&self) -> bool {
        self.terms.keys().any(|&(p, e)| e == 1 || p < 0)
    }

    /// k-th derivative at `r > 0`.
    pub fn derivative(&self, r: f64, k: usize) -> f64 {
        let ln = r.ln();
        self.terms
            .iter()
            .map(|(&(p, e), &c)| {
                let pf = p as f64;
                let pw = r.powi(p - k as i32);
                if e == 0 {
                    c * falling(pf, k) * pw
                } else {
                    c * pw * (falling(pf, k) * ln + falling_dp(pf, k))
                }
            })
            .sum()
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivative(r, 0)
    }

    /// A piece `P` with `ΔP = −self` (radial Laplacian `f″ + f′/r`).
    fn inverse_minus_laplacian(&self) -> RadialPiece {
        let mut out = RadialPiece::default();
        for (&(p, e), &c) in &self.terms {
            let k = p + 2;
            assert!(k != 0, "r^-2 source has no power-law inverse");
            let kf = k as f64;
            if e == 0 {
                out.add(k, false, -c / (kf * kf));
            } else {
                out.add(k, true, -c / (kf * kf));
                out.add(k, false, 2.0 * c / (kf * kf * kf));
            }
        }
        out
    }
}

/// One cascade level on both sides of the interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialLevel {
    pub inner: RadialPiece,
    pub outer: RadialPiece,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadialSide {
    Inner,
    Outer,
}

/// Exact radial solution; `levels[j] = (−Δ)^j u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub m: usize,
    pub q: f64,
    pub rho: f64,
    pub bc: Vec<f64>,
    pub levels: Vec<RadialLevel>,
}

impl RadialSolution {
    fn piece(&self, level: usize, side: RadialSide) -> &RadialPiece {
        match side {
            RadialSide::Inner => &self.levels[level].inner,
            RadialSide::Outer => &self.levels[level].outer,
        }
    }

    /// k-th radial derivative of level `j` at radius `r`, picking the side by `r` vs `ρ`.
    pub fn level_derivative(&self, level: usize, r: f64, k: usize) -> f64 {
        let side = if r < self.rho { RadialSide::Inner } else { RadialSide::Outer };
        self.one_sided(level, side, r, k)
    }

    /// k-th derivative of one closed-form piece, evaluated at any `r > 0`.
    pub fn one_sided(&self, level: usize, side: RadialSide, r: f64, k: usize) -> f64 {
        let piece = self.piece(level, side);
        if r == 0.0 {
            // inner pieces are polynomials in r
            return piece.terms().filter(|&(p, _, _)| p == k as i32).map(|(_, _, c)| c * falling(k as f64, k)).sum();
        }
        piece.derivative(r, k)
    }

    pub fn u(&self, r: f64) -> f64 {
        self.level_derivative(0, r, 0)
    }

    pub fn u_derivative(&self, r: f64, k: usize) -> f64 {
        self.level_derivative(0, r, k)
    }

    /// Value of level `j` at a planar point (radius measured from the origin).
    pub fn level_at(&self, level: usize, x: f64, y: f64) -> f64 {
        self.level_derivative(level, x.hypot(y), 0)
    }

    /// `[∂_r^k u](ρ)`, outer minus inner.
    pub fn jump(&self, k: usize) -> f64 {
        self.jump_level(0, k)
    }

    pub fn jump_level(&self, level: usize, k: usize) -> f64 {
        self.one_sided(level, RadialSide::Outer, self.rho, k) - self.one_sided(level, RadialSide::Inner, self.rho, k)
    }

    /// Largest jump of `∂_r^k u` at ρ over `k = 0..=2m−2`, relative to the derivative size.
    pub fn continuity_defect(&self) -> f64 {
        (0..=2 * self.m - 2)
            .map(|k| {
                let scale = self.one_sided(0, RadialSide::Inner, self.rho, k).abs().max(1.0);
                self.jump(k).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `r,u,du,d2u,d3u` on `samples` radii in `(0, 1]`.
    pub fn write_profile_csv<W: Write>(&self, mut out: W, samples: usize) -> std::io::Result<()> {
        writeln!(out, "r,u,du,d2u,d3u")?;
        for i in 1..=samples {
            let r = i as f64 / samples as f64;
            let d: Vec<f64> = (0..4).map(|k| self.u_derivative(r, k)).collect();
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r, d[0], d[1], d[2], d[3])?;
        }
        Ok(())
    }
}

/// Adaptive double-exponential quadrature; fails if the error estimate exceeds `tol`.
pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, what: &str) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let out = quadrature::double_exponential::integrate(f, a, b, 0.1 * tol);
    if !(out.error_estimate <= tol) || !out.integral.is_finite() {
        return Err(Error::QuadratureTolNotMet { what: what.to_string(), residual: out.error_estimate });
    }
    Ok(out.integral)
}

pub const ORACLE_QUADRATURE_TOL: f64 = 1e-11;

/// `m = 1`: `v = −qρ ln r + c0` outside, `−qρ ln ρ + c0` inside.
pub fn radial_poisson_exact(q: f64, rho: f64, c0: f64) -> Result<RadialSolution> {
    radial_polyharmonic_exact(1, q, rho, &[c0])
}

/// Navier data `bc[j] = ((−Δ)^j u)(1)`, `j = 0..m`.
pub fn radial_polyharmonic_exact(m: usize, q: f64, rho: f64, bc: &[f64]) -> Result<RadialSolution> {
    if m == 0 || m > 4 {
        return Err(Error::OrderUnsupported { m });
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("interface radius must be positive, got {rho}")));
    }
    if bc.len() != m || bc.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument(format!("need {m} finite boundary values, got {bc:?}")));
    }
    let mut levels = vec![RadialLevel { inner: RadialPiece::default(), outer: RadialPiece::default() }; m];
    let mut top = RadialLevel { inner: RadialPiece::default(), outer: RadialPiece::default() };
    top.inner.add(0, false, -q * rho * rho.ln() + bc[m - 1]);
    top.outer.add(0, true, -q * rho);
    top.outer.add(0, false, bc[m - 1]);
    levels[m - 1] = top;
    for j in (0..m - 1).rev() {
        let mut inner = levels[j + 1].inner.inverse_minus_laplacian();
        let mut outer = levels[j + 1].outer.inverse_minus_laplacian();
        // homogeneous parts: A inside, B + C ln r outside
        let c = rho * (inner.derivative(rho, 1) - outer.derivative(rho, 1));
        let b = bc[j] - outer.value(1.0);
        let a = b + c * rho.ln() + outer.value(rho) - inner.value(rho);
        inner.add(0, false, a);
        outer.add(0, false, b);
        outer.add(0, true, c);
        levels[j] = RadialLevel { inner, outer };
    }
    let sol = RadialSolution { m, q, rho, bc: bc.to_vec(), levels };
    check_by_quadrature(&sol)?;
    Ok(sol)
}

/// Verifies `v_j′(r) = −(1/r)∫₀^r s·v_{j+1}(s) ds` at several radii for every lower level.
fn check_by_quadrature(sol: &RadialSolution) -> Result<()> {
    let rho = sol.rho;
    for j in 0..sol.m - 1 {
        let f = |s: f64| s * sol.level_derivative(j + 1, s, 0);
        for &r in &[0.37 * rho, 0.81 * rho, 0.5 * (1.0 + rho), 1.0] {
            let integral = if r <= rho {
                integrate(f, 0.0, r, ORACLE_QUADRATURE_TOL, "oracle level flux")?
            } else {
                integrate(f, 0.0, rho, ORACLE_QUADRATURE_TOL, "oracle level flux")?
                    + integrate(f, rho, r, ORACLE_QUADRATURE_TOL, "oracle level flux")?
            };
            let expected = -integral / r;
            let got = sol.level_derivative(j, r, 1);
            let residual = (expected - got).abs();
            if residual > 1e-9 * (1.0 + got.abs()) {
                return Err(Error::QuadratureTolNotMet { what: format!("level {j} derivative at r = {r}"), residual });
            }
        }
    }
    Ok(())
}

/// Radial bump `A·exp(1 − 1/(1 − (r − c)²/R²))` supported on `|r − c| < R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBump {
    pub center: f64,
    pub radius: f64,
    pub amplitude: f64,
}

impl RadialBump {
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    /// `(φ, φ′, φ″)` in r.
    pub fn jet(&self, r: f64) -> [f64; 3] {
        let y = r - self.center;
        let r2 = self.radius * self.radius;
        let a = 1.0 - y * y / r2;
        if a <= 0.0 {
            return [0.0; 3];
        }
        let phi = self.amplitude * (1.0 - 1.0 / a).exp();
        let a1 = -2.0 * y / r2;
        let a2 = -2.0 / r2;
        let g1 = a1 / (a * a);
        let g2 = a2 / (a * a) - 2.0 * a1 * a1 / (a * a * a);
        [phi, phi * g1, phi * (g1 * g1 + g2)]
    }

    pub fn value(&self, r: f64) -> f64 {
        self.jet(r)[0]
    }

    /// Planar Laplacian of the radial function, `φ″ + φ′/r`.
    pub fn laplacian(&self, r: f64) -> f64 {
        let [_, d1, d2] = self.jet(r);
        if d1 == 0.0 && d2 == 0.0 {
            0.0
        } else {
            d2 + d1 / r
        }
    }
}

/// `∫ f·2πr dr` over the bump support, split at ρ.
fn disk_integral(f: impl Fn(f64) -> f64, bump: &RadialBump, rho: f64) -> Result<f64> {
    let (a, b) = bump.support();
    let g = |r: f64| f(r) * 2.0 * PI * r;
    let tol = 1e-12;
    if a < rho && rho < b {
        Ok(integrate(g, a, rho, tol, "weak-form integral")? + integrate(g, rho, b, tol, "weak-form integral")?)
    } else {
        integrate(g, a, b, tol, "weak-form integral")
    }
}

/// Weak-form defect of the radial solution against a radial test function.
///
/// The top level must satisfy `−∫ v_{m−1} Δφ = ∫_Γ qφ`, and each lower level
/// `−∫ v_j Δφ = ∫ v_{j+1} φ`. Returns the largest absolute defect.
pub fn weakform_residual(sol: &RadialSolution, bump: &RadialBump) -> Result<f64> {
    let (a, b) = bump.support();
    if a <= 0.0 || b >= 1.0 {
        return Err(Error::InvalidArgument(format!("bump support ({a}, {b}) must lie inside (0, 1)")));
    }
    let rho = sol.rho;
    let top = sol.m - 1;
    let lhs = disk_integral(|r| sol.level_derivative(top, r, 0) * bump.laplacian(r), bump, rho)?;
    let mut worst = (lhs + 2.0 * PI * rho * sol.q * bump.value(rho)).abs();
    for j in 0..top {
        let lhs = disk_integral(|r| sol.level_derivative(j, r, 0) * bump.laplacian(r), bump, rho)?;
        let rhs = disk_integral(|r| sol.level_derivative(j + 1, r, 0) * bump.value(r), bump, rho)?;
        worst = worst.max((lhs + rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_examples() {
        let s = radial_poisson_exact(1.0, 0.5, 0.0).unwrap();
        assert!((s.u(0.25) - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((s.u(0.25) - 0.346574).abs() < 1e-6);
        assert!((s.jump(1) + 1.0).abs() < 1e-14);
        let z = radial_poisson_exact(0.0, 0.5, 0.3).unwrap();
        for r in [0.1, 0.5, 0.9] {
            assert_eq!(z.u(r), 0.3);
        }
    }

    #[test]
    fn poisson_weak_form() {
        let s = radial_poisson_exact(1.0, 0.5, 0.0).unwrap();
        let bump = RadialBump { center: 0.5, radius: 0.3, amplitude: 1.0 };
        assert!(weakform_residual(&s, &bump).unwrap() <= 1e-8);
        let z = radial_poisson_exact(0.0, 0.5, 0.0).unwrap();
        assert_eq!(weakform_residual(&z, &bump).unwrap(), 0.0);
    }

    #[test]
    fn polyharmonic_jump_signs() {
        let s2 = radial_polyharmonic_exact(2, 1.0, 0.5, &[0.0, 0.0]).unwrap();
        assert!((s2.jump(3) - 1.0).abs() < 1e-9);
        let s3 = radial_polyharmonic_exact(3, 1.0, 0.5, &[0.0, 0.0, 0.0]).unwrap();
        assert!((s3.jump(5) + 1.0).abs() < 1e-9);
        let bump = RadialBump { center: 0.45, radius: 0.25, amplitude: 1.0 };
        assert!(weakform_residual(&s2, &bump).unwrap() <= 1e-7);
    }

    #[test]
    fn m1_matches_poisson() {
        let a = radial_polyharmonic_exact(1, 2.0, 0.3, &[0.4]).unwrap();
        let b = radial_poisson_exact(2.0, 0.3, 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_values_respected() {
        let bc = [0.1, -0.2, 0.3];
        let s = radial_polyharmonic_exact(3, 1.5, 0.6, &bc).unwrap();
        for (j, b) in bc.iter().enumerate() {
            assert!((s.level_derivative(j, 1.0, 0) - b).abs() < 1e-13);
        }
        assert!(!s.levels.iter().any(|l| l.inner.has_log()));
    }
}
