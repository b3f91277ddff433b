//! Radial biharmonic Alt-Caffarelli problem on the unit disk.
//!
//! Minimizes `E(u) = ∫(Δu)² + |{u > 0}|` over radial `u` with `u = u0`, `Δu = 0` on the unit
//! circle and a single sign change at `r = ρ`. For fixed ρ the optimal profile is
//! `a + b r²` inside and `c + d r² + e ln r + f r² ln r` outside, fixed by a 6×6 linear system;
//! the free-boundary radius then minimizes a one-dimensional energy.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix6, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{integrate, RadialBump};

pub const RHO_MIN: f64 = 0.05;
pub const RHO_MAX: f64 = 0.95;

/// Inner `a + b r²`, outer `c + d r² + e ln r + f r² ln r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub rho: f64,
    pub u0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl RadialProfile {
    /// `∂_r^k u` on the inner piece (`k ≤ 3`).
    pub fn inner(&self, r: f64, k: usize) -> f64 {
        match k {
            0 => self.a + self.b * r * r,
            1 => 2.0 * self.b * r,
            2 => 2.0 * self.b,
            _ => 0.0,
        }
    }

    /// `∂_r^k u` on the outer piece (`k ≤ 3`).
    pub fn outer(&self, r: f64, k: usize) -> f64 {
        let ln = r.ln();
        let Self { c, d, e, f, .. } = *self;
        match k {
            0 => c + d * r * r + e * ln + f * r * r * ln,
            1 => 2.0 * d * r + e / r + f * (2.0 * r * ln + r),
            2 => 2.0 * d - e / (r * r) + f * (2.0 * ln + 3.0),
            3 => 2.0 * e / (r * r * r) + 2.0 * f / r,
            _ => panic!("derivative order {k} not tabulated"),
        }
    }

    pub fn derivative(&self, r: f64, k: usize) -> f64 {
        if r < self.rho {
            self.inner(r, k)
        } else {
            self.outer(r, k)
        }
    }

    pub fn laplacian(&self, r: f64) -> f64 {
        if r < self.rho {
            4.0 * self.b
        } else {
            4.0 * self.d + 4.0 * self.f * (r.ln() + 1.0)
        }
    }

    /// `∫₀¹ (Δu)² 2πr dr` in closed form.
    pub fn bending(&self) -> f64 {
        let rho = self.rho;
        let inner = (4.0 * self.b).powi(2) * PI * rho * rho;
        let alpha = 4.0 * (self.d + self.f);
        let beta = 4.0 * self.f;
        let prim = |r: f64| {
            let ln = r.ln();
            let r2 = r * r;
            alpha * alpha * r2 / 2.0
                + 2.0 * alpha * beta * (r2 / 2.0 * ln - r2 / 4.0)
                + beta * beta * (r2 / 2.0 * ln * ln - r2 / 2.0 * ln + r2 / 4.0)
        };
        inner + 2.0 * PI * (prim(1.0) - prim(rho))
    }

    /// `[u‴](ρ)`, outer minus inner.
    pub fn third_derivative_jump(&self) -> f64 {
        self.outer(self.rho, 3) - self.inner(self.rho, 3)
    }

    /// Largest relative defect of the interface and boundary conditions.
    pub fn constraint_residual(&self) -> f64 {
        let rho = self.rho;
        let scale = self.u0.abs().max(1e-300);
        [
            self.inner(rho, 0),
            self.outer(rho, 0),
            self.outer(rho, 1) - self.inner(rho, 1),
            self.outer(rho, 2) - self.inner(rho, 2),
            self.outer(1.0, 0) - self.u0,
            4.0 * (self.d + self.f),
        ]
        .iter()
        .map(|v| v.abs() / scale)
        .fold(0.0, f64::max)
    }

    /// `u < 0` on `(0, ρ)` and `u > 0` on `(ρ, 1]`, checked on a dense sample.
    pub fn sign_pattern_ok(&self) -> std::result::Result<(), String> {
        let n = 400;
        for i in 0..n {
            let r = self.rho * i as f64 / n as f64;
            if self.inner(r, 0) >= 0.0 {
                return Err(format!("u({r:.4}) = {:.3e} is not negative", self.inner(r, 0)));
            }
        }
        for i in 1..=n {
            let r = self.rho + (1.0 - self.rho) * i as f64 / n as f64;
            if self.outer(r, 0) <= 0.0 {
                return Err(format!("u({r:.4}) = {:.3e} is not positive", self.outer(r, 0)));
            }
        }
        Ok(())
    }

    /// CSV with columns `r,u,du,d2u,d3u`; the interface radius appears once per side.
    pub fn write_profile_csv<W: Write>(&self, mut out: W, samples: usize) -> std::io::Result<()> {
        writeln!(out, "r,u,du,d2u,d3u")?;
        for i in 0..=samples {
            let r = i as f64 / samples as f64;
            let vals: Vec<f64> = (0..4).map(|k| self.derivative(r.max(1e-300), k)).collect();
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", r, vals[0], vals[1], vals[2], vals[3])?;
        }
        Ok(())
    }
}

/// Constrained minimizer of the bending energy for a fixed free-boundary radius.
pub fn radial_constrained_solve(rho: f64, u0: f64) -> Result<RadialProfile> {
    let profile = constrained_profile(rho, u0)?;
    profile.sign_pattern_ok().map_err(|detail| Error::SignPatternViolated { rho, detail })?;
    Ok(profile)
}

fn constrained_profile(rho: f64, u0: f64) -> Result<RadialProfile> {
    if !(RHO_MIN..=RHO_MAX).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho = {rho} outside [{RHO_MIN}, {RHO_MAX}]")));
    }
    if !(u0 > 0.0 && u0.is_finite()) {
        return Err(Error::InvalidArgument(format!("u0 must be positive, got {u0}")));
    }
    let l = rho.ln();
    let r2 = rho * rho;
    #[rustfmt::skip]
    let m = Matrix6::new(
        1.0, r2,        0.0, 0.0,       0.0,            0.0,
        0.0, 0.0,       1.0, r2,        l,              r2 * l,
        0.0, 2.0 * rho, 0.0, -2.0 * rho, -1.0 / rho,    -(2.0 * rho * l + rho),
        0.0, 2.0,       0.0, -2.0,      1.0 / r2,       -(2.0 * l + 3.0),
        0.0, 0.0,       1.0, 1.0,       0.0,            0.0,
        0.0, 0.0,       0.0, 4.0,       0.0,            4.0,
    );
    let rhs = Vector6::new(0.0, 0.0, 0.0, 0.0, u0, 0.0);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::SingularSystem { rho });
    }
    let x = svd.solve(&rhs, 0.0).map_err(|_| Error::SingularSystem { rho })?;
    Ok(RadialProfile { rho, u0, a: x[0], b: x[1], c: x[2], d: x[3], e: x[4], f: x[5] })
}

/// Energy of the constrained profile at ρ: bending plus `|{u > 0}| = π(1 − ρ²)`.
pub fn energy(rho: f64, u0: f64) -> Result<f64> {
    let p = constrained_profile(rho, u0)?;
    Ok(p.bending() + PI * (1.0 - rho * rho))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub rho: f64,
    pub energy: f64,
    pub bending: f64,
    pub measure: f64,
    /// Whether the profile has the required single sign change.
    pub admissible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AltCafOutcome {
    Interior(Box<RadialAltCafSolution>),
    /// `u ≡ u0`, no free boundary, `E = π`.
    Trivial { u0: f64, energy: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialAltCafSolution {
    pub profile: RadialProfile,
    pub energy: f64,
    pub bending: f64,
    pub measure: f64,
    /// `[u‴](ρ*)`.
    pub q_geom: f64,
    /// `−1/(2|u′(ρ*)|)`.
    pub q_el: f64,
}

impl RadialAltCafSolution {
    pub fn from_profile(profile: RadialProfile) -> Self {
        let rho = profile.rho;
        let bending = profile.bending();
        let measure = PI * (1.0 - rho * rho);
        Self {
            profile,
            energy: bending + measure,
            bending,
            measure,
            q_geom: profile.third_derivative_jump(),
            q_el: -1.0 / (2.0 * profile.outer(rho, 1).abs()),
        }
    }

    pub fn rho(&self) -> f64 {
        self.profile.rho
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyScan {
    pub u0: f64,
    pub table: Vec<ScanPoint>,
    pub outcome: AltCafOutcome,
}

impl EnergyScan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "rho,energy,bending,measure,admissible")?;
        for p in &self.table {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                p.rho, p.energy, p.bending, p.measure, p.admissible as u8
            )?;
        }
        Ok(())
    }
}

fn scan_point(rho: f64, u0: f64) -> Result<ScanPoint> {
    let p = constrained_profile(rho, u0)?;
    let bending = p.bending();
    let measure = PI * (1.0 - rho * rho);
    Ok(ScanPoint { rho, energy: bending + measure, bending, measure, admissible: p.sign_pattern_ok().is_ok() })
}

/// Centered difference of `E(ρ)`.
pub fn energy_slope(rho: f64, u0: f64) -> Result<f64> {
    let h = 1e-5;
    Ok((energy(rho + h, u0)? - energy(rho - h, u0)?) / (2.0 * h))
}

/// Scans `E(ρ)` on `[0.05, 0.95]` with step `step`, refines the best admissible point by
/// golden section and a bisection on the slope, and compares against `u ≡ u0`.
pub fn energy_scan(u0: f64, step: f64) -> Result<EnergyScan> {
    if !(u0 > 0.0 && u0.is_finite()) {
        return Err(Error::InvalidArgument(format!("u0 must be positive, got {u0}")));
    }
    if !(step > 0.0 && step < 0.1) {
        return Err(Error::InvalidArgument(format!("scan step {step} outside (0, 0.1)")));
    }
    let count = ((RHO_MAX - RHO_MIN) / step).round() as usize + 1;
    let table: Vec<ScanPoint> = (0..count)
        .into_par_iter()
        .map(|i| scan_point((RHO_MIN + i as f64 * step).min(RHO_MAX), u0))
        .collect::<Result<_>>()?;
    let best = table
        .iter()
        .enumerate()
        .filter(|(_, p)| p.admissible)
        .min_by(|a, b| a.1.energy.total_cmp(&b.1.energy));
    let trivial = AltCafOutcome::Trivial { u0, energy: PI };
    let Some((k, best)) = best else {
        return Ok(EnergyScan { u0, table, outcome: trivial });
    };
    if best.energy >= PI {
        return Ok(EnergyScan { u0, table, outcome: trivial });
    }
    let lo = table[k.saturating_sub(1)].rho;
    let hi = table[(k + 1).min(table.len() - 1)].rho;
    let rho = refine_minimum(u0, lo, hi)?;
    let profile = radial_constrained_solve(rho, u0)?;
    let sol = RadialAltCafSolution::from_profile(profile);
    let outcome = if sol.energy < PI { AltCafOutcome::Interior(Box::new(sol)) } else { trivial };
    Ok(EnergyScan { u0, table, outcome })
}

fn refine_minimum(u0: f64, mut a: f64, mut b: f64) -> Result<f64> {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (energy(c, u0)?, energy(d, u0)?);
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = energy(c, u0)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = energy(d, u0)?;
        }
    }
    // the slope changes sign across the golden-section bracket; bisect on it
    let (mut lo, mut hi) = (a - 1e-6, b + 1e-6);
    let (s_lo, s_hi) = (energy_slope(lo, u0)?, energy_slope(hi, u0)?);
    if !(s_lo < 0.0 && s_hi > 0.0) {
        return Ok(0.5 * (a + b));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if energy_slope(mid, u0)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerLagrangeReport {
    /// `|Q_geom − Q_el|/|Q_el|`.
    pub jump_law_residual: f64,
    /// `|dE/dρ|` at ρ*.
    pub slope: f64,
    pub slope_over_energy: f64,
    /// `|∫ΔuΔφ + ½∫_Γ φ/|∇u||` for each bump.
    pub weak_form_residuals: Vec<f64>,
}

/// The three radial bumps used for the weak-form check; one of them straddles ρ.
pub fn el_test_bumps(rho: f64) -> [RadialBump; 3] {
    let w = 0.5 * rho.min(1.0 - rho);
    [
        RadialBump { center: rho, radius: w, amplitude: 1.0 },
        RadialBump { center: rho - 0.3 * w, radius: w, amplitude: 1.0 },
        RadialBump { center: rho + 0.4 * w, radius: 0.8 * w, amplitude: 1.0 },
    ]
}

/// Checks the jump law, stationarity, and the weak Euler-Lagrange equation.
pub fn verify_euler_lagrange(sol: &RadialAltCafSolution) -> Result<EulerLagrangeReport> {
    let p = &sol.profile;
    let rho = p.rho;
    let slope = energy_slope(rho, p.u0)?.abs();
    let grad = p.outer(rho, 1).abs();
    let mut weak = Vec::new();
    for bump in el_test_bumps(rho) {
        let (a, b) = bump.support();
        let g = |r: f64| p.laplacian(r) * bump.laplacian(r) * 2.0 * PI * r;
        let lhs = integrate(g, a, rho, 1e-12, "Euler-Lagrange weak form")?
            + integrate(g, rho, b, 1e-12, "Euler-Lagrange weak form")?;
        let rhs = -0.5 * 2.0 * PI * rho * bump.value(rho) / grad;
        weak.push((lhs - rhs).abs());
    }
    Ok(EulerLagrangeReport {
        jump_law_residual: (sol.q_geom - sol.q_el).abs() / sol.q_el.abs(),
        slope,
        slope_over_energy: slope / sol.energy,
        weak_form_residuals: weak,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AltCafRegularity {
    pub u3_inner: f64,
    pub u3_outer: f64,
    pub u3_jump: f64,
    pub sup_abs_u3: f64,
    pub grad_at_interface: f64,
    pub u2_continuity: f64,
    pub u1_continuity: f64,
    pub zero_crossings: usize,
}

/// One-sided third derivatives, their jump, `sup|u‴|`, `|u′(ρ*)|`, and continuity defects.
pub fn altcaf_regularity_report(sol: &RadialAltCafSolution) -> AltCafRegularity {
    let p = &sol.profile;
    let rho = p.rho;
    let n = 2000;
    let sup = (1..=n)
        .map(|i| i as f64 / n as f64)
        .filter(|&r| (r - rho).abs() > 1e-9)
        .map(|r| p.derivative(r, 3).abs())
        .fold(p.outer(rho, 3).abs().max(p.inner(rho, 3).abs()), f64::max);
    let mut crossings = 0;
    let mut prev = p.derivative(1e-9, 0);
    for i in 1..=n {
        let v = p.derivative(i as f64 / n as f64, 0);
        if (prev < 0.0) != (v < 0.0) {
            crossings += 1;
        }
        prev = v;
    }
    AltCafRegularity {
        u3_inner: p.inner(rho, 3),
        u3_outer: p.outer(rho, 3),
        u3_jump: p.third_derivative_jump(),
        sup_abs_u3: sup,
        grad_at_interface: p.outer(rho, 1).abs(),
        u2_continuity: (p.outer(rho, 2) - p.inner(rho, 2)).abs(),
        u1_continuity: (p.outer(rho, 1) - p.inner(rho, 1)).abs(),
        zero_crossings: crossings,
    }
}
