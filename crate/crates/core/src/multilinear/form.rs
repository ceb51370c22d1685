use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::{index_basis, shuffle_sign, MAX_DIM};
use super::frame::Frame;
use super::metric::MetricPoint;
use crate::error::{invalid, CalibError, Result};
use crate::linalg::minor_det;

/// Coefficients closer than this compare equal.
pub const FORM_EQ_TOL: f64 = 1e-12;

/// An alternating p-form on Rⁿ, stored densely over the sorted p-subsets of
/// {0..n} in lexicographic order.
#[derive(Debug, Clone)]
pub struct AltForm {
    n: usize,
    p: usize,
    coeffs: Vec<f64>,
}

impl AltForm {
    pub fn zeros(n: usize, p: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n) && p <= n, "form (n={n}, p={p}) out of range");
        Self {
            n,
            p,
            coeffs: vec![0.0; index_basis(n, p).sets.len()],
        }
    }

    /// The axis form `e*_I` (0-based, strictly increasing `idx`).
    pub fn axis(n: usize, idx: &[usize]) -> Self {
        let mut f = Self::zeros(n, idx.len());
        f.set(idx, 1.0).expect("valid axis index");
        f
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut f = Self::zeros(n, 0);
        f.coeffs[0] = c;
        f
    }

    /// Build from 0-based `(indices, coefficient)` terms; repeated sets accumulate.
    pub fn from_terms(n: usize, p: usize, terms: &[(Vec<usize>, f64)]) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&n) || p > n {
            return invalid(format!("form (n={n}, p={p}) out of range"));
        }
        let mut f = Self::zeros(n, p);
        for (idx, c) in terms {
            let k = f.position(idx)?;
            f.coeffs[k] += c;
        }
        f.check_finite()?;
        Ok(f)
    }

    pub fn from_coeffs(n: usize, p: usize, coeffs: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&n) || p > n {
            return invalid(format!("form (n={n}, p={p}) out of range"));
        }
        if coeffs.len() != index_basis(n, p).sets.len() {
            return Err(CalibError::DimensionMismatch(format!(
                "expected {} coefficients",
                index_basis(n, p).sets.len()
            )));
        }
        let f = Self { n, p, coeffs };
        f.check_finite()?;
        Ok(f)
    }

    fn check_finite(&self) -> Result<()> {
        if self.coeffs.iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            invalid("form coefficients must be finite")
        }
    }

    fn position(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.p {
            return invalid(format!("index set {idx:?} has wrong length for degree {}", self.p));
        }
        if idx.windows(2).any(|w| w[0] >= w[1]) || idx.iter().any(|&i| i >= self.n) {
            return invalid(format!("index set {idx:?} must be strictly increasing in 0..{}", self.n));
        }
        let mask = idx.iter().fold(0usize, |m, &i| m | (1 << i));
        Ok(index_basis(self.n, self.p).position[mask])
    }

    pub fn set(&mut self, idx: &[usize], c: f64) -> Result<()> {
        let k = self.position(idx)?;
        self.coeffs[k] = c;
        Ok(())
    }

    pub fn coeff(&self, idx: &[usize]) -> f64 {
        self.position(idx).map(|k| self.coeffs[k]).unwrap_or(0.0)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.p
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Nonzero terms as (0-based index set, coefficient).
    pub fn terms(&self) -> impl Iterator<Item = (&'static [usize], f64)> + '_ {
        index_basis(self.n, self.p)
            .sets
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(s, c)| (s.as_slice(), *c))
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            p: self.p,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.p != other.p {
            return Err(CalibError::DimensionMismatch(format!(
                "forms (n={}, p={}) and (n={}, p={})",
                self.n, self.p, other.n, other.p
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            n: self.n,
            p: self.p,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    /// Evaluate on the columns of an n×p matrix (no orientation sign).
    pub fn eval_matrix(&self, v: &DMatrix<f64>) -> f64 {
        debug_assert_eq!(v.nrows(), self.n);
        debug_assert_eq!(v.ncols(), self.p);
        let cols: Vec<usize> = (0..self.p).collect();
        index_basis(self.n, self.p)
            .sets
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(rows, c)| c * minor_det(v, rows, &cols))
            .sum()
    }

    /// Pullback by the linear map `a`: `(a*φ)(v₁,…) = φ(a v₁,…)`.
    pub fn pullback(&self, a: &DMatrix<f64>) -> Self {
        let basis = index_basis(self.n, self.p);
        let coeffs = basis
            .sets
            .iter()
            .map(|cols| {
                basis
                    .sets
                    .iter()
                    .zip(&self.coeffs)
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(rows, c)| c * minor_det(a, rows, cols))
                    .sum()
            })
            .collect();
        Self {
            n: self.n,
            p: self.p,
            coeffs,
        }
    }

    /// Coefficient max-norm distance; infinite for mismatched shapes.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.n != other.n || self.p != other.p {
            return f64::INFINITY;
        }
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl PartialEq for AltForm {
    fn eq(&self, other: &Self) -> bool {
        self.max_abs_diff(other) <= FORM_EQ_TOL
    }
}

impl Add for &AltForm {
    type Output = AltForm;
    fn add(self, rhs: &AltForm) -> AltForm {
        self.try_add(rhs).expect("form shapes must agree")
    }
}

impl Add for AltForm {
    type Output = AltForm;
    fn add(self, rhs: AltForm) -> AltForm {
        &self + &rhs
    }
}

impl Sub for &AltForm {
    type Output = AltForm;
    fn sub(self, rhs: &AltForm) -> AltForm {
        self + &rhs.scaled(-1.0)
    }
}

impl Neg for &AltForm {
    type Output = AltForm;
    fn neg(self) -> AltForm {
        self.scaled(-1.0)
    }
}

impl Mul<&AltForm> for f64 {
    type Output = AltForm;
    fn mul(self, rhs: &AltForm) -> AltForm {
        rhs.scaled(self)
    }
}

/// Exterior product.
pub fn wedge(a: &AltForm, b: &AltForm) -> Result<AltForm> {
    if a.n != b.n {
        return Err(CalibError::DimensionMismatch(format!(
            "wedge of forms on R^{} and R^{}",
            a.n, b.n
        )));
    }
    if a.p + b.p > a.n {
        return invalid(format!("wedge degree {} exceeds dimension {}", a.p + b.p, a.n));
    }
    let n = a.n;
    let ba = index_basis(n, a.p);
    let bb = index_basis(n, b.p);
    let out_basis = index_basis(n, a.p + b.p);
    let mut out = AltForm::zeros(n, a.p + b.p);
    for (i, ca) in a.coeffs.iter().enumerate() {
        if *ca == 0.0 {
            continue;
        }
        for (j, cb) in b.coeffs.iter().enumerate() {
            if *cb == 0.0 || ba.masks[i] & bb.masks[j] != 0 {
                continue;
            }
            let mask = (ba.masks[i] | bb.masks[j]) as usize;
            let sign = shuffle_sign(&ba.sets[i], &bb.sets[j]);
            out.coeffs[out_basis.position[mask]] += sign * ca * cb;
        }
    }
    Ok(out)
}

/// φ(ξ) for the simple vector represented by the frame.
pub fn eval(phi: &AltForm, xi: &Frame) -> Result<f64> {
    if phi.n != xi.ambient_dim() {
        return Err(CalibError::DimensionMismatch(format!(
            "form on R^{} evaluated on frame in R^{}",
            phi.n,
            xi.ambient_dim()
        )));
    }
    if phi.p != xi.count() {
        return invalid(format!(
            "degree {} form evaluated on {} vectors",
            phi.p,
            xi.count()
        ));
    }
    Ok(xi.orientation() * phi.eval_matrix(xi.matrix()))
}

/// Hodge star with respect to `g` and the orientation of the full frame `orientation`.
pub fn hodge_star(phi: &AltForm, g: &MetricPoint, orientation: &Frame) -> Result<AltForm> {
    let n = phi.n;
    if g.dim() != n || orientation.ambient_dim() != n {
        return Err(CalibError::DimensionMismatch("hodge_star inputs".into()));
    }
    if orientation.count() != n {
        return invalid("hodge_star needs a full n-frame for the orientation");
    }
    let sign = orientation.orientation() * orientation.matrix().determinant().signum();
    let mut e = g.orthonormal_basis();
    if sign < 0.0 {
        e.column_mut(0).neg_mut();
    }
    let in_frame = phi.pullback(&e);
    let starred = hodge_star_orthonormal(&in_frame);
    let e_inv = e.try_inverse().expect("basis is invertible");
    Ok(starred.pullback(&e_inv))
}

/// Hodge star for the standard inner product and orientation.
pub fn hodge_star_orthonormal(phi: &AltForm) -> AltForm {
    let n = phi.n;
    let q = n - phi.p;
    let src = index_basis(n, phi.p);
    let dst = index_basis(n, q);
    let full = (1usize << n) - 1;
    let mut out = AltForm::zeros(n, q);
    for (k, c) in phi.coeffs.iter().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let comp_mask = full & !(src.masks[k] as usize);
        let pos = dst.position[comp_mask];
        out.coeffs[pos] += shuffle_sign(&src.sets[k], &dst.sets[pos]) * c;
    }
    out
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    idx: Vec<usize>,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct FormJson {
    n: usize,
    p: usize,
    terms: Vec<TermJson>,
}

impl Serialize for AltForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FormJson {
            n: self.n,
            p: self.p,
            terms: self
                .terms()
                .map(|(idx, c)| TermJson {
                    idx: idx.iter().map(|i| i + 1).collect(),
                    c,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AltForm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let raw = FormJson::deserialize(d)?;
        let mut terms = Vec::with_capacity(raw.terms.len());
        for t in raw.terms {
            if t.idx.contains(&0) {
                return Err(D::Error::custom("indices are 1-based"));
            }
            if t.idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(D::Error::custom(format!(
                    "index list {:?} is not strictly increasing",
                    t.idx
                )));
            }
            terms.push((t.idx.iter().map(|i| i - 1).collect::<Vec<_>>(), t.c));
        }
        AltForm::from_terms(raw.n, raw.p, &terms).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multilinear::frame::random_frame;

    fn e(n: usize, idx: &[usize]) -> AltForm {
        AltForm::axis(n, idx)
    }

    #[test]
    fn wedge_examples() {
        assert_eq!(wedge(&e(3, &[0]), &e(3, &[1])).unwrap(), e(3, &[0, 1]));
        assert!(wedge(&e(4, &[0, 1]), &e(4, &[0, 1])).unwrap().is_zero());
        let lhs = wedge(&(e(3, &[0]) + e(3, &[1])), &e(3, &[2])).unwrap();
        assert_eq!(lhs, e(3, &[0, 2]) + e(3, &[1, 2]));
        assert_eq!(wedge(&e(3, &[1]), &e(3, &[0])).unwrap(), -&e(3, &[0, 1]));
    }

    #[test]
    fn wedge_rejects_bad_shapes() {
        assert!(wedge(&e(3, &[0, 1]), &e(3, &[1, 2])).is_err());
        assert!(wedge(&e(3, &[0]), &e(4, &[1])).is_err());
    }

    #[test]
    fn eval_examples() {
        let f = Frame::axes(2, &[0, 1]);
        assert_eq!(eval(&e(2, &[0, 1]), &f).unwrap(), 1.0);
        let f = Frame::from_columns(&[vec![0.0, 1.0], vec![1.0, 0.0]], 2).unwrap();
        assert_eq!(eval(&e(2, &[0, 1]), &f).unwrap(), -1.0);
        let s = 0.5f64.sqrt();
        let f = Frame::from_columns(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, s, s]], 4).unwrap();
        let v = eval(&e(4, &[0, 2]).scaled(2.0), &f).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-15);
        assert!(eval(&e(2, &[0, 1]), &Frame::axes(2, &[0])).is_err());
    }

    #[test]
    fn hodge_examples() {
        let g = MetricPoint::identity(4);
        let o = Frame::axes(4, &[0, 1, 2, 3]);
        assert_eq!(hodge_star(&e(4, &[0, 1]), &g, &o).unwrap(), e(4, &[2, 3]));
        let vol = hodge_star(&AltForm::constant(4, 1.0), &g, &o).unwrap();
        assert_eq!(vol, e(4, &[0, 1, 2, 3]));
        let kahler = e(4, &[0, 1]) + e(4, &[2, 3]);
        assert_eq!(hodge_star(&kahler, &g, &o).unwrap(), kahler);
        // reversed orientation flips the sign
        assert_eq!(
            hodge_star(&e(4, &[0, 1]), &g, &o.reversed()).unwrap(),
            -&e(4, &[2, 3])
        );
    }

    #[test]
    fn hodge_volume_under_scaled_metric() {
        let g = MetricPoint::diagonal(&[4.0, 9.0]).unwrap();
        let vol = hodge_star(&AltForm::constant(2, 1.0), &g, &Frame::axes(2, &[0, 1])).unwrap();
        assert!((vol.coeff(&[0, 1]) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn double_star_sign() {
        for n in 2..=6 {
            let g = MetricPoint::identity(n);
            let o = Frame::axes(n, &(0..n).collect::<Vec<_>>());
            for p in 0..=n {
                let terms: Vec<(Vec<usize>, f64)> = index_basis(n, p)
                    .sets
                    .iter()
                    .enumerate()
                    .map(|(k, s)| (s.clone(), (k as f64 * 0.37).sin()))
                    .collect();
                let phi = AltForm::from_terms(n, p, &terms).unwrap();
                let ss = hodge_star(&hodge_star(&phi, &g, &o).unwrap(), &g, &o).unwrap();
                let sign = if (p * (n - p)) % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(ss, phi.scaled(sign), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn pullback_matches_eval() {
        let phi = AltForm::from_terms(4, 2, &[(vec![0, 1], 1.5), (vec![1, 3], -0.5)]).unwrap();
        let a = random_frame(4, 4, 3).matrix().clone() * 2.0;
        let pb = phi.pullback(&a);
        let f = Frame::axes(4, &[1, 3]);
        let direct = phi.eval_matrix(&(&a * f.matrix()));
        assert!((pb.coeff(&[1, 3]) - direct).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let phi = AltForm::from_terms(4, 2, &[(vec![0, 1], 1.0), (vec![2, 3], 2.0)]).unwrap();
        let s = serde_json::to_string(&phi).unwrap();
        assert_eq!(s, r#"{"n":4,"p":2,"terms":[{"idx":[1,2],"c":1.0},{"idx":[3,4],"c":2.0}]}"#);
        let back: AltForm = serde_json::from_str(&s).unwrap();
        assert_eq!(back, phi);
        assert!(serde_json::from_str::<AltForm>(r#"{"n":4,"p":2,"terms":[{"idx":[2,1],"c":1}]}"#).is_err());
        assert!(serde_json::from_str::<AltForm>(r#"{"n":4,"p":2,"terms":[{"idx":[0,1],"c":1}]}"#).is_err());
        assert!(serde_json::from_str::<AltForm>(r#"{"n":4,"p":2,"terms":[{"idx":[1,5],"c":1}]}"#).is_err());
    }
}
