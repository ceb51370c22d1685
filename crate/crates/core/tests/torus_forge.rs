use std::f64::consts::PI;

use calib_core::mass_court::{pl_mass, PLLoop};
use calib_core::torus_forge::{
    build_tubular, forge_multiclass, forge_single, load_pair, ClosedForm, ForgeConfig, ModelKind, ScalarField,
    SubmanifoldCurve, TorusGrid, TubeOptions, DEFAULT_SAMPLES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: f64 = 0.1;

// y = 0.5 + A sin(2πx)
fn wavy_point(x: f64) -> [f64; 2] {
    [x, 0.5 + A * (2.0 * PI * x).sin()]
}

fn torus_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let w = |t: f64| t - t.round();
    w(a[0] - b[0]).hypot(w(a[1] - b[1]))
}

#[test]
fn wavy_length_and_reach_match_closed_forms() {
    let c = SubmanifoldCurve::wavy(A, DEFAULT_SAMPLES).unwrap();
    // Simpson on √(1 + y′²)
    let m = 20_000;
    let f = |x: f64| (1.0 + (2.0 * PI * A * (2.0 * PI * x).cos()).powi(2)).sqrt();
    let h = 1.0 / m as f64;
    let simpson: f64 = (0..m)
        .map(|k| {
            let x = k as f64 * h;
            h / 6.0 * (f(x) + 4.0 * f(x + h / 2.0) + f(x + h))
        })
        .sum();
    assert!((c.length() - simpson).abs() < 1e-8, "{} vs {simpson}", c.length());
    // κ_max = (2π)²A at the crests; the bottleneck (≈ 1/2) does not bind
    let kappa = (2.0 * PI).powi(2) * A;
    assert!((c.max_curvature() - kappa).abs() < 1e-4 * kappa);
    assert!((c.reach() - 1.0 / kappa).abs() < 1e-4);
}

#[test]
fn tube_distances_match_dense_sampling() {
    let c = SubmanifoldCurve::wavy(A, DEFAULT_SAMPLES).unwrap();
    let grid = TorusGrid::cube(2, 128).unwrap();
    let tube = build_tubular(&c, grid, &TubeOptions::default()).unwrap();
    let dense: Vec<[f64; 2]> = (0..200_000).map(|k| wavy_point(k as f64 / 200_000.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 200 {
        let node = rng.random_range(0..grid.len());
        if !tube.mask[node] {
            continue;
        }
        let p = grid.position(node);
        let want = dense.iter().map(|q| torus_dist([p[0], p[1]], *q)).fold(f64::INFINITY, f64::min);
        assert!((tube.d[node] - want).abs() < 1e-6, "node {node}: {} vs {want}", tube.d[node]);
        checked += 1;
    }
    assert!((tube.epsilon - 0.8 * tube.reach).abs() < 1e-15);
}

#[test]
fn closed_forms_have_path_independent_periods() {
    let grid = TorusGrid::cube(2, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pot = ScalarField::from_fn(grid, |_, p| (2.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).cos() + 0.3 * p[0].cos());
    let c = [0.75, -0.5, 0.0];
    let form = ClosedForm::from_potential(grid, c, pot);
    for _ in 0..50 {
        let w = [rng.random_range(-2..=2), rng.random_range(-2..=2), 0i64];
        let base = [rng.random::<f64>(), rng.random::<f64>(), 0.0];
        let l = PLLoop::straight(2, base, w, 16).unwrap();
        let lifted = l.lifted();
        let mut total = 0.0;
        for k in 0..lifted.len() {
            let a = lifted[k];
            let b = if k + 1 < lifted.len() {
                lifted[k + 1]
            } else {
                [lifted[0][0] + w[0] as f64, lifted[0][1] + w[1] as f64, 0.0]
            };
            total += form.line_integral(a, b);
        }
        let want = c[0] * w[0] as f64 + c[1] * w[1] as f64;
        assert!((total - want).abs() < 1e-12, "{total} vs {want}");
    }
    let (curl, _) = form.nodal().max_exterior_derivative();
    assert_eq!(curl, 0.0);
}

#[test]
fn wavy_pair_calibrates_the_curve() {
    let cfg = ForgeConfig::new(ModelKind::Wavy2d);
    let f = forge_single(&cfg).unwrap();
    assert!(f.report.pass, "{:?}", f.report.certification.failures);
    assert!((f.report.period - 1.0).abs() < 1e-12);
    let cert = &f.report.certification;
    assert_eq!(cert.d_phi_max, 0.0);
    assert!(cert.comass_max <= 1.0 + 2e-3);
    assert!(cert.calibration_on_m.min >= 1.0 - 1e-3);
    // g̃-length of M equals its period up to the on-curve deviation
    let m = PLLoop::from_curve(&f.curve);
    let mass = pl_mass(&m, &f.metric);
    assert!(mass >= 1.0 - 1e-9 && mass <= 1.0 + 1e-3, "{mass}");
    // the flat length is strictly larger: the metric shrinks M
    assert!(f.curve.length() > 1.05);
}

#[test]
fn dump_and_reload_reproduce_masses() {
    let cfg = ForgeConfig::new(ModelKind::Wavy2d).with_resolution(128);
    let f = forge_single(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.bin");
    f.dump(&path).unwrap();
    let back = load_pair(&path).unwrap();
    assert_eq!(back.config, cfg);
    let m = PLLoop::from_curve(&back.curves[0]);
    assert_eq!(pl_mass(&m, &back.metric), pl_mass(&PLLoop::from_curve(&f.curve), &f.metric));
    let a = [0.1, 0.2, 0.0];
    let b = [0.9, 1.7, 0.0];
    assert!((back.forms[0].line_integral(a, b) - f.certified.line_integral(a, b)).abs() < 1e-12);
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut cfg = ForgeConfig::new(ModelKind::Twocircle3d).with_resolution(32);
    cfg.corrupt_rho = true;
    assert!(forge_multiclass(&cfg).is_err());
    assert!(forge_single(&ForgeConfig::new(ModelKind::Twocircle3d)).is_err());
    let mut bad = ForgeConfig::new(ModelKind::Wavy2d).with_resolution(128);
    bad.epsilon_factor = 0.95;
    assert!(forge_single(&bad).is_err());
    assert!("torus".parse::<ModelKind>().is_err());
}
