//! Canonical form of a simple vector relative to a subspace.
//!
//! For a unit simple p-vector ξ and a subspace V there are orthonormal
//! f₁..f_r in V, g₁..g_s in V^⊥ and angles 0 < θⱼ < π/2 (j ≤ k) with
//! ξ = ∧ⱼ(cos θⱼ fⱼ + sin θⱼ gⱼ) ∧ f_{k+1}..f_r ∧ g_{k+1}..g_s and r+s−k = p.
//! The cos²θⱼ are the eigenvalues of B(u, v) = ⟨π_V u, π_V v⟩ on span ξ.

use nalgebra::{DMatrix, DVector};

use super::frame::Frame;
use super::metric::MetricPoint;
use crate::error::{CalibError, Result};
use crate::linalg::g_orthonormalize;

/// Angles within this distance of 0 or π/2 go to the pure f / pure g blocks.
pub const ANGLE_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct CanonicalFrame {
    /// θ₁..θ_k, ascending.
    pub angles: Vec<f64>,
    /// f₁..f_r: the first k pair with the angles, the rest lie in span ξ ∩ V.
    pub f_vectors: Vec<DVector<f64>>,
    /// g₁..g_s: the first k pair with the angles, the rest lie in span ξ ∩ V^⊥.
    pub g_vectors: Vec<DVector<f64>>,
    pub r: usize,
    pub s: usize,
    pub k: usize,
}

impl CanonicalFrame {
    /// The frame (cos θⱼ fⱼ + sin θⱼ gⱼ)ⱼ, f_{k+1..r}, g_{k+1..s}.
    pub fn reconstruct(&self) -> Frame {
        let n = self
            .f_vectors
            .first()
            .or(self.g_vectors.first())
            .map(|v| v.len())
            .unwrap_or(0);
        let mut cols: Vec<DVector<f64>> = Vec::new();
        for (j, th) in self.angles.iter().enumerate() {
            cols.push(&self.f_vectors[j] * th.cos() + &self.g_vectors[j] * th.sin());
        }
        cols.extend(self.f_vectors[self.k..].iter().cloned());
        cols.extend(self.g_vectors[self.k..].iter().cloned());
        if cols.is_empty() {
            return Frame::from_matrix_unchecked(DMatrix::zeros(n, 0));
        }
        Frame::from_matrix_unchecked(DMatrix::from_columns(&cols))
    }
}

/// Canonical decomposition of span(`xi`) against span(`v`) under `g`.
pub fn canonical_frame(xi: &Frame, v: &Frame, g: &MetricPoint) -> Result<CanonicalFrame> {
    let n = xi.ambient_dim();
    if v.ambient_dim() != n || g.dim() != n {
        return Err(CalibError::DimensionMismatch("canonical_frame inputs".into()));
    }
    let gm = g.matrix();
    let p = xi.count();
    let q = g_orthonormalize(xi.matrix(), gm)
        .ok_or_else(|| CalibError::Degenerate("xi frame is degenerate under g".into()))?;
    let pv = if v.count() > 0 {
        g_orthonormalize(v.matrix(), gm)
            .ok_or_else(|| CalibError::Degenerate("V frame is degenerate under g".into()))?
    } else {
        DMatrix::zeros(n, 0)
    };
    // coordinates of π_V(q_j) in the basis pv, and the V^⊥ remainder
    let m = pv.transpose() * gm * &q;
    let perp = &q - &pv * &m;
    let b = m.transpose() * &m;
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    // descending cos² ⇒ ascending angle
    order.sort_by(|&a, &c| eig.eigenvalues[c].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut angles = Vec::new();
    let (mut f_pair, mut g_pair) = (Vec::new(), Vec::new());
    let (mut f_pure, mut g_pure) = (Vec::new(), Vec::new());
    for &j in &order {
        let mut w = eig.eigenvectors.column(j).into_owned();
        // deterministic sign: largest-magnitude component positive
        let imax = w.iamax();
        if w[imax] < 0.0 {
            w.neg_mut();
        }
        let x = &q * &w;
        let par = &pv * (&m * &w);
        let ort = &perp * &w;
        let c = g_len(&par, gm);
        let s = g_len(&ort, gm);
        let theta = s.atan2(c);
        if theta <= ANGLE_CUTOFF {
            f_pure.push(x);
        } else if theta >= std::f64::consts::FRAC_PI_2 - ANGLE_CUTOFF {
            g_pure.push(x);
        } else {
            angles.push(theta);
            f_pair.push(par / c);
            g_pair.push(ort / s);
        }
    }
    let k = angles.len();
    let r = k + f_pure.len();
    let s = k + g_pure.len();
    f_pair.extend(f_pure);
    g_pair.extend(g_pure);
    Ok(CanonicalFrame {
        angles,
        f_vectors: f_pair,
        g_vectors: g_pair,
        r,
        s,
        k,
    })
}

fn g_len(v: &DVector<f64>, g: &DMatrix<f64>) -> f64 {
    (v.transpose() * g * v)[0].max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn contained_and_orthogonal_cases() {
        let g = MetricPoint::identity(4);
        let v12 = Frame::axes(4, &[0, 1]);
        let c = canonical_frame(&Frame::axes(4, &[0, 1]), &v12, &g).unwrap();
        assert_eq!((c.k, c.r, c.s), (0, 2, 0));
        let c = canonical_frame(&Frame::axes(4, &[2, 3]), &v12, &g).unwrap();
        assert_eq!((c.k, c.r, c.s), (0, 0, 2));
    }

    #[test]
    fn single_angle_case() {
        let g = MetricPoint::identity(4);
        let s = 0.5f64.sqrt();
        let xi = Frame::from_columns(&[vec![s, 0.0, s, 0.0], vec![0.0, 1.0, 0.0, 0.0]], 4).unwrap();
        let c = canonical_frame(&xi, &Frame::axes(4, &[0, 1]), &g).unwrap();
        assert_eq!((c.k, c.r, c.s), (1, 2, 1));
        assert!((c.angles[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((&c.f_vectors[0] - v(&[1.0, 0.0, 0.0, 0.0])).norm() < 1e-12);
        assert!((&c.g_vectors[0] - v(&[0.0, 0.0, 1.0, 0.0])).norm() < 1e-12);
        assert!((&c.f_vectors[1] - v(&[0.0, 1.0, 0.0, 0.0])).norm() < 1e-12);
    }
}
