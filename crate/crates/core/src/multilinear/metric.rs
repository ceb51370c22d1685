use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::basis::MAX_DIM;
use crate::error::{invalid, CalibError, Result};

/// A symmetric positive-definite bilinear form on one tangent space.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    entries: DMatrix<f64>,
}

impl MetricPoint {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || n != entries.ncols() || n > MAX_DIM {
            return invalid(format!(
                "metric must be square with 1 ≤ n ≤ {MAX_DIM}, got {}×{}",
                entries.nrows(),
                entries.ncols()
            ));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return invalid("metric entries must be finite");
        }
        for i in 0..n {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 {
                    return invalid(format!("metric not symmetric at ({i},{j})"));
                }
            }
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        if min_eig <= 1e-10 {
            return Err(CalibError::Degenerate(format!(
                "metric not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { entries: sym })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * self.entries[(i, j)] * v[j];
            }
        }
        s
    }

    /// Columns form a g-orthonormal, positively oriented basis: `Eᵀ g E = I`.
    pub fn orthonormal_basis(&self) -> DMatrix<f64> {
        let l = self
            .entries
            .clone()
            .cholesky()
            .expect("metric is positive definite")
            .l();
        let n = self.dim();
        l.transpose()
            .solve_upper_triangular(&DMatrix::identity(n, n))
            .expect("invertible")
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    /// `det(g)^{1/2}`, the volume of the unit coordinate cube.
    pub fn volume_factor(&self) -> f64 {
        self.entries.determinant().sqrt()
    }
}

#[derive(Serialize, Deserialize)]
struct MetricJson {
    n: usize,
    entries: Vec<Vec<f64>>,
}

impl Serialize for MetricPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        MetricJson {
            n,
            entries: (0..n)
                .map(|i| (0..n).map(|j| self.entries[(i, j)]).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MetricJson::deserialize(d)?;
        if raw.entries.len() != raw.n || raw.entries.iter().any(|r| r.len() != raw.n) {
            return Err(serde::de::Error::custom("metric entries must be n×n"));
        }
        let m = DMatrix::from_fn(raw.n, raw.n, |i, j| raw.entries[i][j]);
        MetricPoint::new(m).map_err(serde::de::Error::custom)
    }
}
