use std::f64::consts::PI;

use calib_core::mass_court::{
    delta_grid, minimization_trial, period_pairing_exact, pl_mass, random_competitor, CompetitorOptions, PLLoop,
    TrialOptions,
};
use calib_core::torus_forge::{
    forge_multiclass, forge_single, scale_far_field, ForgeConfig, MetricField, ModelKind, TorusGrid,
};

#[test]
fn mass_under_a_conformal_metric_matches_quadrature() {
    let grid = TorusGrid::cube(2, 256).unwrap();
    let lam = |x: f64| 1.0 + 0.5 * (2.0 * PI * x).sin();
    let values: Vec<f64> = (0..grid.len()).map(|n| lam(grid.position(n)[0])).collect();
    let g = MetricField::conformal(grid, &values);
    // horizontal loop: ∫₀¹ √λ(x) dx by Simpson
    let m = 10_000;
    let h = 1.0 / m as f64;
    let want: f64 = (0..m)
        .map(|k| {
            let x = k as f64 * h;
            h / 6.0 * (lam(x).sqrt() + 4.0 * lam(x + h / 2.0).sqrt() + lam(x + h).sqrt())
        })
        .sum();
    let l = PLLoop::straight(2, [0.0, 0.3, 0.0], [1, 0, 0], 512).unwrap();
    assert!((pl_mass(&l, &g) - want).abs() < 1e-4, "{} vs {want}", pl_mass(&l, &g));
    // vertical loop at a node column: √λ(x₀), up to interpolation
    let x0 = 64.0 / 256.0;
    let v = PLLoop::straight(2, [x0, 0.0, 0.0], [0, 1, 0], 64).unwrap();
    assert!((pl_mass(&v, &g) - lam(x0).sqrt()).abs() < 1e-12);
    // multiplicity scales the mass
    assert!((pl_mass(&l.clone().with_weight(3.0), &g) - 3.0 * pl_mass(&l, &g)).abs() < 1e-12);
}

#[test]
fn periods_are_invariant_over_fifty_competitors() {
    let f = forge_single(&ForgeConfig::new(ModelKind::Wavy2d).with_resolution(128)).unwrap();
    let m = PLLoop::from_curve(&f.curve);
    let period = period_pairing_exact(&m, &f.certified);
    assert!((period - 1.0).abs() < 1e-12);
    for s in 0..50 {
        let c = random_competitor(2, m.winding(), 1000 + s, 3 + (s as usize % 5), &CompetitorOptions::default()).unwrap();
        assert!((period_pairing_exact(&c, &f.certified) - period).abs() < 1e-10, "competitor {s}");
        // lower bound from the calibration inequality
        assert!(pl_mass(&c, &f.metric) >= period - 5e-3);
    }
}

#[test]
fn three_torus_summed_trial_passes() {
    let cfg = ForgeConfig::new(ModelKind::Twocircle3d).with_resolution(64);
    let f = forge_multiclass(&cfg).unwrap();
    assert!(f.report.pass, "{:?}", f.report.failures);
    let phi = f.forms[0].combine(1.0, &f.forms[1], 1.0).unwrap();
    let cycle: Vec<PLLoop> = f.curves.iter().map(PLLoop::from_curve).collect();
    let opts = TrialOptions {
        competitors: 60,
        seed: 2,
        delta_grid: delta_grid(64, ModelKind::Twocircle3d.default_resolution()),
        ..TrialOptions::default()
    };
    let r = minimization_trial(&cycle, &phi, &f.metric, &opts).unwrap();
    assert!(r.pass);
    assert!((r.period_M - 2.0).abs() < 1e-12);
    assert!((r.mass_M - 2.0).abs() < 1e-2);
    assert!(r.max_period_spread < 1e-10);
    assert!(r.masses.iter().all(|m| *m > r.mass_M));
}

#[test]
fn shrunken_far_field_is_caught() {
    let mut f = forge_single(&ForgeConfig::new(ModelKind::Wavy2d)).unwrap();
    let eps = f.tube.epsilon;
    let changed = scale_far_field(&mut f.metric, &[&f.tube.d], eps, 0.04);
    assert!(changed > f.tube.grid.len() / 2);
    let m = [PLLoop::from_curve(&f.curve)];
    let opts = TrialOptions { competitors: 100, seed: 1, ..TrialOptions::default() };
    let r = minimization_trial(&m, &f.certified, &f.metric, &opts).unwrap();
    assert!(!r.pass);
    assert!(!r.lower_bound_violations.is_empty());
    let worst = r.lower_bound_violations.iter().find(|v| v.vertices.is_some()).unwrap();
    assert!(worst.max_pointwise_ratio > 1.0 + opts.pointwise_tolerance);
    assert!(r.lower_bound_violations.iter().filter(|v| v.vertices.is_some()).count() == 1);
}

#[test]
fn competitors_are_reproducible_and_homologous() {
    let opts = CompetitorOptions::default();
    let a = random_competitor(3, [0, 1, 0], 9, 4, &opts).unwrap();
    let b = random_competitor(3, [0, 1, 0], 9, 4, &opts).unwrap();
    assert_eq!(a.lifted(), b.lifted());
    assert_eq!(a.winding(), [0, 1, 0]);
    assert!(a.len() >= 256);
    assert!(random_competitor(2, [1, 0, 0], 9, 2, &opts).is_err());
}
