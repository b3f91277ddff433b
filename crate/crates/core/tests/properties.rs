use proptest::prelude::*;

use polylab::altcaf::radial_constrained_solve;
use polylab::analysis::convergence_order;
use polylab::assembly::{Corrector, SurfaceDensity};
use polylab::geometry::{tube_radius, CosineMode, Curve, Rect};
use polylab::grid::{Grid, GridField};
use polylab::io::{color_ramp, RAMP_ANCHORS};
use polylab::oracle::radial_polyharmonic_exact;
use polylab::solve::{solve_source_poisson, SolveOptions};
use polylab::Vec2;

fn star(r0: f64, amp: f64, k: u32) -> Curve {
    Curve::fourier_star(Vec2::new(0.05, -0.03), r0, vec![CosineMode { k, amplitude: amp }]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_inverts_normal_offset(
        a in 0.3..0.7f64,
        b in 0.3..0.7f64,
        t in 0.0..1.0f64,
        s in -0.8..0.8f64,
    ) {
        let c = Curve::ellipse(Vec2::zeros(), a, b).unwrap();
        let t = t * c.period();
        let reach = 1.0 / c.max_abs_curvature();
        let s = s * 0.5 * reach;
        let x = c.point(t) + c.normal(t) * s;
        let p = c.project(x).unwrap();
        prop_assert!((p.distance - s).abs() < 1e-9, "d = {} vs {}", p.distance, s);
        prop_assert!((p.foot - c.point(t)).norm() < 1e-7);
        prop_assert!((p.foot + p.normal * p.distance - x).norm() < 1e-9);
    }

    #[test]
    fn star_projection_sign_matches_radius(
        r0 in 0.4..0.6f64,
        amp in 0.0..0.08f64,
        k in 2u32..6,
        t in 0.0..1.0f64,
        s in -1.0..1.0f64,
    ) {
        let c = star(r0, amp, k);
        let t = t * c.period();
        let s = s * 0.4 / c.max_abs_curvature();
        let x = c.point(t) + c.normal(t) * s;
        let p = c.project(x).unwrap();
        prop_assert!((p.distance - s).abs() < 1e-8);
        prop_assert_eq!(p.distance < 0.0, s < 0.0);
    }

    #[test]
    fn poisson_solve_is_linear(alpha in -3.0..3.0f64, k1 in 1.0..4.0f64, k2 in 1.0..4.0f64) {
        let grid = Grid::new(Rect::centered_square(1.0), 33).unwrap();
        let f1 = GridField::from_fn(&grid, |x| (k1 * x.x).sin() * (x.y + 0.3));
        let f2 = GridField::from_fn(&grid, |x| (k2 * x.y).cos() * x.x * x.x);
        let sum = f1.zip_with(&f2, |p, q| alpha * p + q).unwrap();
        let zero = |_: Vec2| 0.0;
        let opts = SolveOptions::default();
        let (u1, _) = solve_source_poisson(&grid, &f1, &zero, &opts).unwrap();
        let (u2, _) = solve_source_poisson(&grid, &f2, &zero, &opts).unwrap();
        let (us, _) = solve_source_poisson(&grid, &sum, &zero, &opts).unwrap();
        let combo = u1.zip_with(&u2, |p, q| alpha * p + q).unwrap();
        let diff = us.zip_with(&combo, |p, q| p - q).unwrap().max_abs();
        prop_assert!(diff <= 1e-10 * (1.0 + us.max_abs()), "{diff}");
    }

    #[test]
    fn radial_oracle_jump_law(m in 1usize..=3, q in 0.2..2.0f64, neg in any::<bool>(), rho in 0.2..0.8f64) {
        let q = if neg { -q } else { q };
        let sol = radial_polyharmonic_exact(m, q, rho, &vec![0.0; m]).unwrap();
        let expected = if m % 2 == 1 { -q } else { q };
        prop_assert!((sol.jump(2 * m - 1) - expected).abs() <= 1e-9 * q.abs(), "{} vs {}", sol.jump(2 * m - 1), expected);
        prop_assert!(sol.continuity_defect() <= 1e-9);
    }

    #[test]
    fn corrector_kink_carries_density(t in 0.0..1.0f64, base in 0.5..1.5f64, amp in -0.4..0.4f64, delta in 1e-4..1e-2f64) {
        let c = Curve::circle(Vec2::zeros(), 0.5).unwrap();
        let q = SurfaceDensity::cosine(base, amp, 2);
        let eps = tube_radius(&c, &Rect::centered_square(1.0)).unwrap();
        let cor = Corrector::new(c.clone(), q, eps);
        let t = t * c.period();
        let kappa = c.curvature(t);
        let w = |d: f64| cor.eval(t, d, kappa).w;
        let qt = cor.eval(t, 0.0, kappa).qtilde;
        prop_assert!(w(0.0).abs() < 1e-15);
        let out = (w(2.0 * delta) - w(delta)) / delta;
        let inn = (w(-delta) - w(-2.0 * delta)) / delta;
        prop_assert!((out - inn + qt).abs() <= 1e-10 * qt.abs().max(1.0));
    }

    #[test]
    fn fitted_order_recovers_power_law(p in 0.5..4.0f64, c in 1e-6..1e2f64) {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let errs: Vec<f64> = hs.iter().map(|h: &f64| c * h.powf(p)).collect();
        let fit = convergence_order(&errs, &hs).unwrap();
        prop_assert!((fit - p).abs() < 1e-9);
    }

    #[test]
    fn altcaf_profile_meets_constraints(rho in 0.15..0.9f64, u0 in 0.02..0.2f64) {
        let prof = radial_constrained_solve(rho, u0).unwrap();
        prop_assert!(prof.constraint_residual() <= 1e-9, "{}", prof.constraint_residual());
    }
}

#[test]
fn color_ramp_hits_anchors() {
    let ramp = color_ramp();
    for (s, rgb) in RAMP_ANCHORS {
        let k = (s * 255.0).round() as usize;
        for ch in 0..3 {
            assert!((ramp[k][ch] as i32 - rgb[ch] as i32).abs() <= 1, "{k}: {:?} vs {:?}", ramp[k], rgb);
        }
    }
    assert_eq!(ramp[0], RAMP_ANCHORS[0].1);
    assert_eq!(ramp[255], RAMP_ANCHORS[4].1);
}

#[test]
fn documented_ramp_matches_code() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.md");
    let doc = std::fs::read_to_string(path).unwrap();
    let ramp = color_ramp();
    let rows: Vec<[u8; 3]> = doc
        .lines()
        .filter_map(|l| {
            let cells: Vec<&str> = l.trim().trim_matches('|').split('|').map(str::trim).collect();
            let k: usize = cells.first()?.parse().ok()?;
            (cells.len() == 4 && k < 256).then(|| [1, 2, 3].map(|c| cells[c].parse().unwrap()))
        })
        .collect();
    assert_eq!(rows.len(), 256);
    for (k, rgb) in rows.iter().enumerate() {
        assert_eq!(*rgb, ramp[k], "entry {k}");
    }
}
