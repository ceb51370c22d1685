//! Pointwise metric constructions: conformal scaling, convex gluing, the
//! Harvey–Lawson adapted decomposition and metric, the disk-bundle point
//! model, and block split-weight transforms.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::comass::comass;
use crate::error::{invalid, CalibError, Result};
use crate::linalg::{g_complement, g_orthonormalize};
use crate::multilinear::{binomial, eval, gram_norm, index_basis, AltForm, Frame, MetricPoint};

fn symmetric(m: DMatrix<f64>) -> Result<MetricPoint> {
    let sym = (&m + m.transpose()) * 0.5;
    MetricPoint::new(sym)
}

pub fn scale_metric(g: &MetricPoint, f: f64) -> Result<MetricPoint> {
    if !(f > 0.0) || !f.is_finite() {
        return invalid(format!("conformal factor must be positive, got {f}"));
    }
    MetricPoint::new(g.matrix() * f)
}

/// a·g₁ + b·g₂.
pub fn glue_metrics(a: f64, g1: &MetricPoint, b: f64, g2: &MetricPoint) -> Result<MetricPoint> {
    if !(a > 0.0) || !(b > 0.0) {
        return invalid(format!("gluing weights must be positive, got {a}, {b}"));
    }
    if g1.dim() != g2.dim() {
        return Err(CalibError::DimensionMismatch(format!(
            "gluing metrics on R^{} and R^{}",
            g1.dim(),
            g2.dim()
        )));
    }
    symmetric(g1.matrix() * a + g2.matrix() * b)
}

/// Right-hand side of the gluing bound: 1/√(a^p/c₁² + b^p/c₂²).
pub fn gluing_bound(a: f64, c1: f64, b: f64, c2: f64, p: usize) -> f64 {
    let t = |w: f64, c: f64| if c == 0.0 { f64::INFINITY } else { w.powi(p as i32) / (c * c) };
    1.0 / (t(a, c1) + t(b, c2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct HlDecomposition {
    /// g-orthonormal basis of span(ξ), oriented like ξ.
    pub v: Frame,
    /// Complement on which the (p−1)-contractions of φ/θ vanish, g-orthonormal.
    pub w: Frame,
    /// θ = φ(ξ)/‖ξ‖_g.
    pub theta: f64,
    /// Coefficients of φ/θ − e*_{1..p} in the dual basis of (v, w).
    pub residual: AltForm,
}

impl HlDecomposition {
    /// The adapted basis (v₁..v_p, w₁..w_{n−p}) as columns.
    pub fn adapted_basis(&self) -> DMatrix<f64> {
        let (v, w) = (self.v.matrix(), self.w.matrix());
        let n = v.nrows();
        let mut b = DMatrix::zeros(n, n);
        b.columns_mut(0, v.ncols()).copy_from(v);
        b.columns_mut(v.ncols(), w.ncols()).copy_from(w);
        b
    }
}

/// Adapted decomposition starting from the g-orthogonal complement of ξ.
pub fn hl_decompose(phi: &AltForm, xi: &Frame, g: &MetricPoint) -> Result<HlDecomposition> {
    hl_decompose_from(phi, xi, g, None)
}

/// As [`hl_decompose`], with an explicit initial complement (n−p columns
/// spanning a subspace transverse to ξ).
pub fn hl_decompose_from(
    phi: &AltForm,
    xi: &Frame,
    g: &MetricPoint,
    initial: Option<&DMatrix<f64>>,
) -> Result<HlDecomposition> {
    let n = g.dim();
    let p = phi.degree();
    if phi.ambient_dim() != n || xi.ambient_dim() != n || xi.count() != p {
        return Err(CalibError::DimensionMismatch(format!(
            "form ({}, {}), frame ({}, {}), metric {n}",
            phi.ambient_dim(),
            p,
            xi.ambient_dim(),
            xi.count()
        )));
    }
    let norm = gram_norm(xi, g);
    let theta = eval(phi, xi)? / norm;
    if theta.abs() < 1e-10 {
        return Err(CalibError::Degenerate(format!(
            "form vanishes on the plane (φ(ξ)/‖ξ‖ = {theta:e})"
        )));
    }
    let mut v = g_orthonormalize(xi.matrix(), g.matrix())
        .ok_or_else(|| CalibError::Degenerate("frame vectors are dependent".into()))?;
    if xi.orientation() < 0.0 && p > 0 {
        v.column_mut(0).neg_mut();
    }
    let phin = phi.scaled(1.0 / theta);

    let w0 = match initial {
        Some(m) => {
            if m.nrows() != n || m.ncols() != n - p {
                return Err(CalibError::DimensionMismatch(format!(
                    "initial complement must be {n}×{}",
                    n - p
                )));
            }
            let mut full = DMatrix::zeros(n, n);
            full.columns_mut(0, p).copy_from(&v);
            full.columns_mut(p, n - p).copy_from(m);
            if full.svd(false, false).singular_values.min() < 1e-10 {
                return invalid("initial complement is not transverse to the plane");
            }
            m.clone()
        }
        None => g_complement(&v, g.matrix()),
    };

    // w ↦ w − Σⱼ cⱼ(w) vⱼ with cⱼ(w) = (−1)^{p−j} φ(v₁..v̂ⱼ..v_p, w), j 1-based
    let mut w = w0.clone();
    let mut sub = DMatrix::zeros(n, p);
    for k in 0..w.ncols() {
        let col = w0.column(k).into_owned();
        let mut corrected = col.clone();
        for j in 0..p {
            let mut c = 0;
            for jj in 0..p {
                if jj != j {
                    sub.set_column(c, &v.column(jj));
                    c += 1;
                }
            }
            sub.set_column(p - 1, &col);
            let sign = if (p - 1 - j).is_multiple_of(2) { 1.0 } else { -1.0 };
            corrected -= v.column(j) * (sign * phin.eval_matrix(&sub));
        }
        w.set_column(k, &corrected);
    }
    let mut w = g_orthonormalize(&w, g.matrix())
        .ok_or_else(|| CalibError::Degenerate("corrected complement collapsed".into()))?;

    let mut basis = DMatrix::zeros(n, n);
    basis.columns_mut(0, p).copy_from(&v);
    basis.columns_mut(p, n - p).copy_from(&w);
    if n > p && basis.determinant() < 0.0 {
        w.column_mut(0).neg_mut();
        basis.column_mut(p).neg_mut();
    }
    let mut residual = phin.pullback(&basis);
    let lead: Vec<usize> = (0..p).collect();
    let lead_c = residual.coeff(&lead);
    residual.set(&lead, lead_c - 1.0)?;
    Ok(HlDecomposition {
        v: Frame::new(v)?,
        w: if n > p {
            Frame::new(w)?
        } else {
            Frame::from_columns(&[], n)?
        },
        theta,
        residual,
    })
}

/// Number of indices from {0..p−1} in each residual index set must be ≤ p−2;
/// returns the largest offending coefficient (0 when the pattern holds).
pub fn vanishing_pattern_defect(residual: &AltForm) -> f64 {
    let p = residual.degree();
    residual
        .terms()
        .filter(|(idx, _)| p >= 1 && idx.iter().filter(|&&i| i < p).count() + 2 > p)
        .map(|(_, c)| c.abs())
        .fold(0.0, f64::max)
}

/// Minimal admissible C for [`hl_metric`]: √(binom(n,p)·‖φ‖*_{adapted}/θ).
pub fn hl_min_c(phi: &AltForm, xi: &Frame, g: &MetricPoint) -> Result<(f64, HlDecomposition)> {
    let dec = hl_decompose(phi, xi, g)?;
    if dec.theta < 0.0 {
        return invalid("φ(ξ) must be positive; reverse the frame orientation");
    }
    let n = g.dim();
    let p = phi.degree();
    let b = dec.adapted_basis();
    let binv = b.clone().try_inverse().expect("adapted basis invertible");
    let adapted = symmetric(binv.transpose() * binv)?;
    let upper = comass(phi, &adapted)?.upper;
    Ok(((binomial(n, p) as f64 * upper / dec.theta).sqrt(), dec))
}

/// Inner product ⟨,⟩_V ⊕ C²⟨,⟩_W in which φ has comass θ, attained on ξ.
pub fn hl_metric(phi: &AltForm, xi: &Frame, g: &MetricPoint, c: f64) -> Result<MetricPoint> {
    let (minimal, dec) = hl_min_c(phi, xi, g)?;
    if !(c > minimal) {
        return Err(CalibError::InadmissibleC { given: c, minimal });
    }
    let n = g.dim();
    let p = phi.degree();
    let b = dec.adapted_basis();
    let binv = b.try_inverse().expect("adapted basis invertible");
    let mut d = DMatrix::identity(n, n);
    for i in p..n {
        d[(i, i)] = c * c;
    }
    symmetric(binv.transpose() * d * binv)
}

#[derive(Debug, Clone)]
pub struct BundlePoint {
    pub phi: AltForm,
    pub g: MetricPoint,
    pub tangent_frame: Frame,
    /// The horizontal a-plane frame (a₁..a_m).
    pub horizontal: Frame,
}

/// Tangent-space model at a point of a submanifold of a disk bundle: unit
/// tangents eᵢ = sinθᵢ·aᵢ + cosθᵢ·bᵢ, and π*ω the simple m-form dual to the
/// a-plane normalized so that π*ω(e₁∧…∧e_m) = 1.
pub fn bundle_point_model(angles: &[f64], m: usize, q: usize) -> Result<BundlePoint> {
    if m == 0 || q == 0 {
        return invalid("horizontal and fiber dimensions must be positive");
    }
    if angles.len() != m {
        return invalid(format!("expected {m} angles, got {}", angles.len()));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    if let Some(t) = angles.iter().find(|t| !(**t > 0.0 && **t <= half_pi + 1e-15)) {
        return invalid(format!("angle {t} outside (0, π/2]"));
    }
    let tilted = angles.iter().filter(|t| **t < half_pi).count();
    if tilted > q {
        return invalid(format!(
            "{tilted} tilted directions need {tilted} fiber dimensions, got {q}"
        ));
    }
    let n = m + q;
    let mut e = DMatrix::zeros(n, m);
    let mut fiber = m;
    for (i, &t) in angles.iter().enumerate() {
        e[(i, i)] = t.sin();
        if t < half_pi {
            e[(fiber, i)] = t.cos();
            fiber += 1;
        }
    }
    let scale: f64 = angles.iter().map(|t| t.sin()).product();
    let lead: Vec<usize> = (0..m).collect();
    let phi = AltForm::axis(n, &lead).scaled(1.0 / scale);
    Ok(BundlePoint {
        phi,
        g: MetricPoint::identity(n),
        tangent_frame: Frame::new(e)?,
        horizontal: Frame::axes(n, &lead),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitWeight {
    #[serde(serialize_with = "ser_metric")]
    pub metric: MetricPoint,
    pub block_dims: Vec<usize>,
    pub exponents: Vec<f64>,
    pub f: f64,
}

fn ser_metric<S: serde::Serializer>(m: &MetricPoint, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.matrix().row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.serialize(s)
}

impl SplitWeight {
    /// Factor by which the volume element of the coordinate subspace spanned
    /// by the given blocks is multiplied: f^{Σ eᵢ·dim_i/2}. Unit volume forms
    /// scale by the reciprocal.
    pub fn volume_factor(&self, blocks: &[usize]) -> f64 {
        let e: f64 = blocks
            .iter()
            .map(|&i| self.exponents[i] * self.block_dims[i] as f64)
            .sum();
        self.f.powf(e / 2.0)
    }

    pub fn full_volume_factor(&self) -> f64 {
        let all: Vec<usize> = (0..self.block_dims.len()).collect();
        self.volume_factor(&all)
    }

    /// Coordinate index range of block `i`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = self.block_dims[..i].iter().sum();
        start..start + self.block_dims[i]
    }
}

/// Block-diagonal metric with block i multiplied by f^{exponent_i}.
pub fn split_weight_transform(blocks: &[(MetricPoint, f64)], f: f64) -> Result<SplitWeight> {
    if !(f >= 1.0) || !f.is_finite() {
        return invalid(format!("weight f must be ≥ 1, got {f}"));
    }
    if blocks.is_empty() {
        return invalid("no blocks");
    }
    let n: usize = blocks.iter().map(|(b, _)| b.dim()).sum();
    let mut m = DMatrix::zeros(n, n);
    let mut start = 0;
    for (b, e) in blocks {
        let k = b.dim();
        m.view_mut((start, start), (k, k))
            .copy_from(&(b.matrix() * f.powf(*e)));
        start += k;
    }
    Ok(SplitWeight {
        metric: symmetric(m)?,
        block_dims: blocks.iter().map(|(b, _)| b.dim()).collect(),
        exponents: blocks.iter().map(|(_, e)| *e).collect(),
        f,
    })
}

/// As [`split_weight_transform`] for a full metric whose block structure is
/// given by `dims`; off-block entries must vanish.
pub fn split_weight_transform_metric(
    g: &MetricPoint,
    dims: &[usize],
    exponents: &[f64],
    f: f64,
) -> Result<SplitWeight> {
    if dims.len() != exponents.len() || dims.iter().sum::<usize>() != g.dim() {
        return Err(CalibError::DimensionMismatch(format!(
            "blocks {dims:?} do not partition R^{}",
            g.dim()
        )));
    }
    let mut owner = Vec::with_capacity(g.dim());
    for (b, &d) in dims.iter().enumerate() {
        owner.extend(std::iter::repeat_n(b, d));
    }
    let gm = g.matrix();
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            if owner[i] != owner[j] && gm[(i, j)].abs() > 1e-12 {
                return invalid(format!("metric is not block diagonal: entry ({i},{j}) = {}", gm[(i, j)]));
            }
        }
    }
    let mut blocks = Vec::with_capacity(dims.len());
    let mut start = 0;
    for (&d, &e) in dims.iter().zip(exponents) {
        let sub = gm.view((start, start), (d, d)).into_owned();
        blocks.push((MetricPoint::new(sub)?, e));
        start += d;
    }
    split_weight_transform(&blocks, f)
}

/// Model triple point: R^{2k} ⊕ … split into three blocks of dimension `k`,
/// with ωᵢ the unit volume form of the two blocks other than i. Returns
/// (ω₁, ω₂, ω₃).
pub fn triple_point_forms(k: usize) -> [AltForm; 3] {
    let n = 3 * k;
    let block = |b: usize| (b * k..(b + 1) * k).collect::<Vec<_>>();
    let vol = |a: usize, b: usize| {
        let mut idx = block(a);
        idx.extend(block(b));
        idx.sort_unstable();
        AltForm::axis(n, &idx)
    };
    [vol(1, 2), vol(0, 2), vol(0, 1)]
}

/// Index sets of the given degree containing at least `min_in` indices of `block`.
pub fn index_sets_meeting(n: usize, p: usize, block: &[usize], min_in: usize) -> Vec<Vec<usize>> {
    index_basis(n, p)
        .sets
        .iter()
        .filter(|s| s.iter().filter(|i| block.contains(i)).count() >= min_in)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comass::comass_exact;
    use crate::linalg::principal_angles;

    fn e(n: usize, idx: &[usize]) -> AltForm {
        AltForm::axis(n, idx)
    }

    #[test]
    fn scaling_examples() {
        let id = MetricPoint::identity(4);
        assert_eq!(scale_metric(&id, 1.0).unwrap().matrix(), id.matrix());
        let k = e(4, &[0, 1]) + e(4, &[2, 3]);
        let c = comass_exact(&k, &scale_metric(&id, 4.0).unwrap()).unwrap().lower;
        assert!((c - 0.25).abs() < 1e-14);
        let dx = e(4, &[0]);
        let c = comass_exact(&dx, &scale_metric(&id, 0.25).unwrap()).unwrap().lower;
        assert!((c - 2.0).abs() < 1e-14);
        assert!(scale_metric(&id, 0.0).is_err());
    }

    #[test]
    fn gluing_examples() {
        let g1 = MetricPoint::diagonal(&[1.0, 1.0]).unwrap();
        let g2 = MetricPoint::diagonal(&[4.0, 9.0]).unwrap();
        let s = glue_metrics(1.0, &g1, 1.0, &g2).unwrap();
        assert_eq!(s.matrix(), MetricPoint::diagonal(&[5.0, 10.0]).unwrap().matrix());
        let t = glue_metrics(1.0, &g2, 1e-12, &g1).unwrap();
        assert!((t.matrix() - g2.matrix()).abs().max() < 1e-11);
        assert!(glue_metrics(1.0, &g1, 0.0, &g2).is_err());
    }

    #[test]
    fn hl_decompose_examples() {
        let id = MetricPoint::identity(4);
        let xi = Frame::axes(4, &[0, 1]);
        let d = hl_decompose(&(e(4, &[0, 1]) + e(4, &[2, 3])), &xi, &id).unwrap();
        let target = DMatrix::from_column_slice(4, 2, &[0., 0., 1., 0., 0., 0., 0., 1.]);
        assert!(principal_angles(d.w.matrix(), &target).iter().all(|a| *a < 1e-12));
        assert!((d.residual.coeff(&[2, 3]).abs() - 1.0).abs() < 1e-12);
        assert!((d.residual.l1_norm() - 1.0).abs() < 1e-12);

        let d = hl_decompose(&(e(4, &[0, 1]) + e(4, &[0, 2])), &xi, &id).unwrap();
        let target = DMatrix::from_column_slice(4, 2, &[0., -1., 1., 0., 0., 0., 0., 1.]);
        assert!(principal_angles(d.w.matrix(), &target).iter().all(|a| *a < 1e-12));
        assert!(d.residual.max_abs() < 1e-12);

        let id5 = MetricPoint::identity(5);
        let d = hl_decompose(&e(5, &[0, 1]), &Frame::axes(5, &[0, 1]), &id5).unwrap();
        assert!(d.residual.max_abs() < 1e-12);
        assert_eq!(d.w.count(), 3);
    }

    #[test]
    fn hl_decompose_rejects_null_plane() {
        let r = hl_decompose(&e(4, &[2, 3]), &Frame::axes(4, &[0, 1]), &MetricPoint::identity(4));
        assert!(matches!(r, Err(CalibError::Degenerate(_))));
    }

    #[test]
    fn hl_metric_examples() {
        let id = MetricPoint::identity(4);
        let xi = Frame::axes(4, &[0, 1]);
        let k = e(4, &[0, 1]) + e(4, &[2, 3]);
        let h = hl_metric(&k, &xi, &id, 3.0).unwrap();
        let est = comass_exact(&k, &h).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-6);
        assert!(matches!(
            hl_metric(&k, &xi, &id, 2.0),
            Err(CalibError::InadmissibleC { .. })
        ));
        let h = hl_metric(&e(4, &[0, 1]), &xi, &id, 5.0).unwrap();
        assert!((comass_exact(&e(4, &[0, 1]), &h).unwrap().lower - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bundle_examples() {
        let half = std::f64::consts::FRAC_PI_2;
        let b = bundle_point_model(&[half, half], 2, 1).unwrap();
        assert!((comass_exact(&b.phi, &b.g).unwrap().lower - 1.0).abs() < 1e-12);
        let b = bundle_point_model(&[std::f64::consts::PI / 6.0, half], 2, 2).unwrap();
        assert!((eval(&b.phi, &b.horizontal).unwrap() - 2.0).abs() < 1e-12);
        assert!((eval(&b.phi, &b.tangent_frame).unwrap() - 1.0).abs() < 1e-12);
        let b = bundle_point_model(&[std::f64::consts::FRAC_PI_4], 1, 1).unwrap();
        let c = comass_exact(&b.phi, &b.g).unwrap().lower;
        assert!((c - 2f64.sqrt()).abs() < 1e-12);
        assert!(bundle_point_model(&[0.0], 1, 1).is_err());
        assert!(bundle_point_model(&[2.0], 1, 1).is_err());
    }

    #[test]
    fn split_weight_examples() {
        let one = MetricPoint::identity(1);
        let blocks = [(one.clone(), 1.0), (one.clone(), 1.0), (one.clone(), -2.0)];
        let s = split_weight_transform(&blocks, 2.0).unwrap();
        assert!((s.metric.volume_factor() - 1.0).abs() < 1e-15);
        assert!((s.full_volume_factor() - 1.0).abs() < 1e-15);
        let s = split_weight_transform(&blocks, 1.0).unwrap();
        assert_eq!(s.metric.matrix(), &DMatrix::identity(3, 3));
        let g = MetricPoint::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 2.0])).unwrap();
        assert!(split_weight_transform_metric(&g, &[1, 1], &[1.0, 1.0], 2.0).is_err());
        assert!(split_weight_transform_metric(&g, &[2], &[1.0], 2.0).is_ok());
    }
}
