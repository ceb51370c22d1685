use calib_core::multilinear::{
    binomial, eval, hodge_star_orthonormal, random_frame, wedge, AltForm, Frame, MetricPoint,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_form(n: usize, p: usize, rng: &mut ChaCha8Rng) -> AltForm {
    AltForm::from_coeffs(n, p, (0..binomial(n, p)).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

// φ(v₁..v_p) = Σ_I c_I det(V[I, :]), with the minors from nalgebra's LU.
fn eval_by_minors(phi: &AltForm, v: &DMatrix<f64>) -> f64 {
    phi.terms()
        .map(|(idx, c)| {
            let rows = DMatrix::from_fn(idx.len(), v.ncols(), |i, j| v[(idx[i], j)]);
            c * rows.determinant()
        })
        .sum()
}

#[test]
fn evaluation_matches_minor_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (n, p) in [(4, 2), (6, 3), (7, 3), (8, 4), (5, 5)] {
        for t in 0..20 {
            let phi = random_form(n, p, &mut rng);
            let xi = random_frame(n, p, 1000 + t);
            let got = eval(&phi, &xi).unwrap();
            let want = eval_by_minors(&phi, xi.matrix());
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "n={n} p={p}: {got} vs {want}");
        }
    }
}

#[test]
fn wedge_of_covectors_is_a_determinant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 5;
    let covs: Vec<AltForm> = (0..3).map(|_| random_form(n, 1, &mut rng)).collect();
    let w = wedge(&wedge(&covs[0], &covs[1]).unwrap(), &covs[2]).unwrap();
    let xi = random_frame(n, 3, 9);
    let m = DMatrix::from_fn(3, 3, |i, j| {
        (0..n).map(|k| covs[i].coeffs()[k] * xi.matrix()[(k, j)]).sum::<f64>()
    });
    assert!((eval(&w, &xi).unwrap() - m.determinant()).abs() < 1e-12);
}

#[test]
fn wedge_is_graded_commutative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_form(6, 2, &mut rng);
    let b = random_form(6, 3, &mut rng);
    let ab = wedge(&a, &b).unwrap();
    let ba = wedge(&b, &a).unwrap();
    assert!(ab.max_abs_diff(&ba) < 1e-13);
    let c = random_form(6, 1, &mut rng);
    assert!(wedge(&c, &c).unwrap().max_abs() < 1e-15);
}

#[test]
fn hodge_star_pairs_to_the_inner_product() {
    // α ∧ ⋆β = ⟨α, β⟩ vol and ⋆⋆ = (−1)^{p(n−p)}
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (n, p) in [(4, 2), (5, 2), (6, 3), (7, 3)] {
        let a = random_form(n, p, &mut rng);
        let b = random_form(n, p, &mut rng);
        let top = wedge(&a, &hodge_star_orthonormal(&b)).unwrap();
        let inner: f64 = a.coeffs().iter().zip(b.coeffs()).map(|(x, y)| x * y).sum();
        assert!((top.coeffs()[0] - inner).abs() < 1e-12);
        let sign = if (p * (n - p)) % 2 == 0 { 1.0 } else { -1.0 };
        let ss = hodge_star_orthonormal(&hodge_star_orthonormal(&a));
        assert!(ss.max_abs_diff(&a.scaled(sign)) < 1e-13);
    }
}

#[test]
fn frame_norm_is_gram_determinant() {
    use calib_core::multilinear::gram_norm;
    let xi = random_frame(5, 2, 4);
    let l = DMatrix::from_fn(5, 5, |i, j| if i >= j { 1.0 + 0.1 * (i + j) as f64 } else { 0.0 });
    let g = MetricPoint::new(&l * l.transpose()).unwrap();
    let gram = xi.matrix().transpose() * g.matrix() * xi.matrix();
    assert!((gram_norm(&xi, &g) - gram.determinant().sqrt()).abs() < 1e-12);
}

#[test]
fn json_roundtrip_and_validation() {
    let phi = AltForm::from_terms(7, 3, &[(vec![0, 1, 2], 1.0), (vec![1, 3, 5], -0.5)]).unwrap();
    let text = serde_json::to_string(&phi).unwrap();
    assert!(text.contains("[1,2,3]"), "indices are 1-based on the wire: {text}");
    let back: AltForm = serde_json::from_str(&text).unwrap();
    assert_eq!(back.max_abs_diff(&phi), 0.0);
    for bad in [
        r#"{"n":3,"p":2,"terms":[{"idx":[0,1],"c":1}]}"#,
        r#"{"n":3,"p":2,"terms":[{"idx":[2,2],"c":1}]}"#,
        r#"{"n":3,"p":2,"terms":[{"idx":[1,4],"c":1}]}"#,
        r#"{"n":9,"p":2,"terms":[]}"#,
    ] {
        assert!(serde_json::from_str::<AltForm>(bad).is_err(), "{bad}");
    }
    let xi = Frame::axes(7, &[0, 1, 2]);
    assert_eq!(eval(&back, &xi).unwrap(), 1.0);
}
