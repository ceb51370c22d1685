use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::basis::MAX_DIM;
use super::metric::MetricPoint;
use crate::error::{invalid, CalibError, Result};
use crate::seeds;

/// Gram norms at or below this value mark a degenerate frame.
pub const DEGENERATE_NORM: f64 = 1e-10;

/// p linearly independent vectors in Rⁿ with an explicit orientation sign.
/// Represents the simple p-vector `orientation · v₁∧…∧v_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    vectors: DMatrix<f64>,
    orientation: f64,
}

impl Frame {
    /// Frame from column vectors; rejects dependent or non-finite input.
    pub fn new(vectors: DMatrix<f64>) -> Result<Self> {
        let n = vectors.nrows();
        if n == 0 || n > MAX_DIM || vectors.ncols() > n {
            return invalid(format!(
                "frame of {} vectors in R^{} is not allowed",
                vectors.ncols(),
                n
            ));
        }
        if vectors.iter().any(|x| !x.is_finite()) {
            return invalid("frame vectors must be finite");
        }
        if vectors.ncols() > 0 {
            let mut normalized = vectors.clone();
            for mut c in normalized.column_iter_mut() {
                let nrm = c.norm();
                if nrm == 0.0 {
                    return Err(CalibError::Degenerate("zero frame vector".into()));
                }
                c /= nrm;
            }
            let smin = normalized.svd(false, false).singular_values.min();
            if smin <= 1e-10 {
                return Err(CalibError::Degenerate(format!(
                    "frame vectors are dependent (smallest singular value {smin:e})"
                )));
            }
        }
        Ok(Self {
            vectors,
            orientation: 1.0,
        })
    }

    pub fn from_columns(cols: &[Vec<f64>], n: usize) -> Result<Self> {
        if cols.iter().any(|c| c.len() != n) {
            return Err(CalibError::DimensionMismatch(format!(
                "frame vectors must have length {n}"
            )));
        }
        let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Self::new(m)
    }

    pub(crate) fn from_matrix_unchecked(vectors: DMatrix<f64>) -> Self {
        Self {
            vectors,
            orientation: 1.0,
        }
    }

    /// Standard basis vectors `e_i` for the given 0-based indices.
    pub fn axes(n: usize, idx: &[usize]) -> Self {
        let m = DMatrix::from_fn(n, idx.len(), |i, j| if i == idx[j] { 1.0 } else { 0.0 });
        Self::from_matrix_unchecked(m)
    }

    pub fn with_orientation(mut self, sign: f64) -> Self {
        self.orientation = if sign < 0.0 { -1.0 } else { 1.0 };
        self
    }

    pub fn reversed(&self) -> Self {
        Self {
            vectors: self.vectors.clone(),
            orientation: -self.orientation,
        }
    }

    /// Swap two vectors; the orientation flips so the represented plane is unchanged.
    pub fn swap(&self, i: usize, j: usize) -> Self {
        let mut v = self.vectors.clone();
        if i != j {
            v.swap_columns(i, j);
        }
        Self {
            vectors: v,
            orientation: if i != j { -self.orientation } else { self.orientation },
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn count(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        self.vectors
            .column_iter()
            .map(|c| c.iter().copied().collect())
            .collect()
    }

    /// Plücker coordinates (lexicographic p-subsets), including orientation.
    pub fn plucker(&self) -> Vec<f64> {
        let n = self.ambient_dim();
        let p = self.count();
        let cols: Vec<usize> = (0..p).collect();
        super::basis::index_basis(n, p)
            .sets
            .iter()
            .map(|rows| self.orientation * crate::linalg::minor_det(&self.vectors, rows, &cols))
            .collect()
    }
}

/// `√det G` with `G_ij = g(v_i, v_j)`: the g-volume of the spanned parallelepiped.
pub fn gram_norm(xi: &Frame, g: &MetricPoint) -> f64 {
    let v = xi.matrix();
    if v.ncols() == 0 {
        return 1.0;
    }
    let gram = v.transpose() * g.matrix() * v;
    gram.determinant().max(0.0).sqrt()
}

pub fn is_degenerate_norm(value: f64) -> bool {
    value <= DEGENERATE_NORM
}

/// Orthonormal p-frame in Rⁿ from QR (positive diagonal) of a Gaussian matrix.
pub fn random_frame(n: usize, p: usize, seed: u64) -> Frame {
    let mut rng = seeds::rng(seed);
    random_frame_with(n, p, &mut rng)
}

pub fn random_frame_with<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Frame {
    assert!(p <= n && n >= 1, "random_frame requires p ≤ n");
    let a = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    Frame::from_matrix_unchecked(orthonormal_factor(a))
}

/// Q factor of a thin QR with non-negative diagonal of R.
pub fn orthonormal_factor(a: DMatrix<f64>) -> DMatrix<f64> {
    let p = a.ncols();
    if p == 0 {
        return a;
    }
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            let mut c = q.column_mut(j);
            c.neg_mut();
        }
    }
    q
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    n: usize,
    columns: Vec<Vec<f64>>,
    #[serde(default = "one")]
    orientation: f64,
}

fn one() -> f64 {
    1.0
}

impl Serialize for Frame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FrameJson {
            n: self.ambient_dim(),
            columns: self.columns(),
            orientation: self.orientation,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Frame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FrameJson::deserialize(d)?;
        Frame::from_columns(&raw.columns, raw.n)
            .map(|f| f.with_orientation(raw.orientation))
            .map_err(serde::de::Error::custom)
    }
}
