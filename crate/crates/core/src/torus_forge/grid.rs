//! Periodic grids on the unit flat torus T² or T³ and fields sampled on them.

use rayon::prelude::*;

use crate::error::{invalid, CalibError, Result};

pub type Point = [f64; 3];

/// Nodes sit at i/N along each axis; index N is identified with index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusGrid {
    dim: usize,
    res: [usize; 3],
}

impl TorusGrid {
    pub fn new(dim: usize, res: &[usize]) -> Result<Self> {
        if !(dim == 2 || dim == 3) || res.len() != dim {
            return invalid(format!("grid must be 2- or 3-dimensional, got {dim} with {res:?}"));
        }
        if res.iter().any(|&n| n < 4 || n % 2 != 0) {
            return invalid(format!("resolutions must be even and ≥ 4, got {res:?}"));
        }
        let mut r = [1; 3];
        r[..dim].copy_from_slice(res);
        Ok(Self { dim, res: r })
    }

    pub fn cube(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, &vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res[..self.dim]
    }

    /// Largest cell size.
    pub fn spacing(&self) -> f64 {
        1.0 / *self.resolution().iter().min().unwrap() as f64
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.res[0] * (c[1] + self.res[1] * c[2])
    }

    pub fn coords(&self, node: usize) -> [usize; 3] {
        let i = node % self.res[0];
        let j = (node / self.res[0]) % self.res[1];
        let k = node / (self.res[0] * self.res[1]);
        [i, j, k]
    }

    pub fn position(&self, node: usize) -> Point {
        let c = self.coords(node);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = c[a] as f64 / self.res[a] as f64;
        }
        p
    }

    /// Periodic neighbour of `node` shifted by `step` along `axis`.
    pub fn shift(&self, node: usize, axis: usize, step: isize) -> usize {
        let mut c = self.coords(node);
        let n = self.res[axis] as isize;
        c[axis] = (c[axis] as isize + step).rem_euclid(n) as usize;
        self.index(c)
    }

    /// Multiplier of the centered difference along `axis`: N/2.
    pub fn half_inverse_spacing(&self, axis: usize) -> f64 {
        self.res[axis] as f64 / 2.0
    }
}

/// Componentwise nearest-image reduction of a displacement.
pub fn wrap(v: Point, dim: usize) -> Point {
    let mut out = v;
    for x in out[..dim].iter_mut() {
        *x -= x.round();
    }
    out
}

pub fn norm(v: Point) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: TorusGrid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(usize, Point) -> f64 + Sync) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|n| f(n, grid.position(n)))
            .collect();
        Self { grid, data }
    }

    pub fn interpolate(&self, p: Point) -> f64 {
        let mut out = [0.0];
        interpolate(&self.grid, &self.data, 1, p, &mut out);
        out[0]
    }

    /// Centered-difference gradient.
    pub fn gradient(&self) -> CovectorField {
        let g = self.grid;
        let d = g.dim();
        let data: Vec<f64> = (0..g.len())
            .into_par_iter()
            .flat_map_iter(|n| {
                (0..d).map(move |a| {
                    (self.data[g.shift(n, a, 1)] - self.data[g.shift(n, a, -1)])
                        * g.half_inverse_spacing(a)
                })
            })
            .collect();
        CovectorField { grid: g, data }
    }
}

#[derive(Debug, Clone)]
pub struct CovectorField {
    pub grid: TorusGrid,
    /// `dim` components per node.
    pub data: Vec<f64>,
}

impl CovectorField {
    pub fn constant(grid: TorusGrid, c: Point) -> Self {
        let d = grid.dim();
        let mut data = Vec::with_capacity(grid.len() * d);
        for _ in 0..grid.len() {
            data.extend_from_slice(&c[..d]);
        }
        Self { grid, data }
    }

    pub fn from_fn(grid: TorusGrid, f: impl Fn(usize, Point) -> Point + Sync) -> Self {
        let d = grid.dim();
        let data = (0..grid.len())
            .into_par_iter()
            .flat_map_iter(|n| {
                let v = f(n, grid.position(n));
                (0..d).map(move |a| v[a])
            })
            .collect();
        Self { grid, data }
    }

    pub fn at(&self, node: usize) -> Point {
        let d = self.grid.dim();
        let mut v = [0.0; 3];
        v[..d].copy_from_slice(&self.data[node * d..(node + 1) * d]);
        v
    }

    pub fn interpolate(&self, p: Point) -> Point {
        let mut out = [0.0; 3];
        let d = self.grid.dim();
        interpolate(&self.grid, &self.data, d, p, &mut out[..d]);
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(CalibError::DimensionMismatch("fields on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        })
    }

    /// Centered-difference exterior derivative: one component (∂ₓΦ_y − ∂_yΦₓ)
    /// on T², three on T³ (yz, zx, xy).
    pub fn exterior_derivative(&self) -> Vec<f64> {
        let g = self.grid;
        let d = g.dim();
        let pairs: &[(usize, usize)] = if d == 2 {
            &[(0, 1)]
        } else {
            &[(1, 2), (2, 0), (0, 1)]
        };
        (0..g.len())
            .into_par_iter()
            .flat_map_iter(|n| {
                pairs.iter().map(move |&(a, b)| {
                    let da = (self.data[g.shift(n, a, 1) * d + b] - self.data[g.shift(n, a, -1) * d + b])
                        * g.half_inverse_spacing(a);
                    let db = (self.data[g.shift(n, b, 1) * d + a] - self.data[g.shift(n, b, -1) * d + a])
                        * g.half_inverse_spacing(b);
                    da - db
                })
            })
            .collect()
    }

    /// Largest absolute component of the discrete exterior derivative, with its node.
    pub fn max_exterior_derivative(&self) -> (f64, usize) {
        let d = self.exterior_derivative();
        let k = if self.grid.dim() == 2 { 1 } else { 3 };
        d.iter()
            .enumerate()
            .fold((0.0, 0), |acc, (i, v)| if v.abs() > acc.0 { (v.abs(), i / k) } else { acc })
    }
}

pub fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Symmetric d×d tensor per node, packed row-major upper triangle.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub grid: TorusGrid,
    pub data: Vec<f64>,
}

impl MetricField {
    pub fn conformal(grid: TorusGrid, lambda: &[f64]) -> Self {
        let d = grid.dim();
        let k = packed_len(d);
        let mut data = vec![0.0; grid.len() * k];
        for (n, l) in lambda.iter().enumerate() {
            let mut pos = 0;
            for i in 0..d {
                for j in i..d {
                    if i == j {
                        data[n * k + pos] = *l;
                    }
                    pos += 1;
                }
            }
        }
        Self { grid, data }
    }

    pub fn identity(grid: TorusGrid) -> Self {
        Self::conformal(grid, &vec![1.0; grid.len()])
    }

    fn unpack(d: usize, packed: &[f64]) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        let mut pos = 0;
        for i in 0..d {
            for j in i..d {
                m[i][j] = packed[pos];
                m[j][i] = packed[pos];
                pos += 1;
            }
        }
        m
    }

    pub fn at(&self, node: usize) -> [[f64; 3]; 3] {
        let d = self.grid.dim();
        let k = packed_len(d);
        Self::unpack(d, &self.data[node * k..(node + 1) * k])
    }

    pub fn interpolate(&self, p: Point) -> [[f64; 3]; 3] {
        let d = self.grid.dim();
        let k = packed_len(d);
        let mut out = [0.0; 6];
        interpolate(&self.grid, &self.data, k, p, &mut out[..k]);
        Self::unpack(d, &out[..k])
    }

    /// Smallest eigenvalue over all nodes, with its node.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let d = self.grid.dim();
        (0..self.grid.len())
            .into_par_iter()
            .map(|n| {
                let m = self.at(n);
                let mat = nalgebra::DMatrix::from_fn(d, d, |i, j| m[i][j]);
                (mat.symmetric_eigenvalues().min(), n)
            })
            .reduce(|| (f64::INFINITY, 0), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
    }

    /// g(v, v) for the tensor `m`.
    pub fn quadratic(m: &[[f64; 3]; 3], v: Point) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += m[i][j] * v[i] * v[j];
            }
        }
        s
    }
}

/// Exact degree-1 comass: the g-dual norm √(Φᵀ g⁻¹ Φ).
pub fn dual_norm(m: &[[f64; 3]; 3], phi: Point, dim: usize) -> f64 {
    if dim == 2 {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let q = (m[1][1] * phi[0] * phi[0] - 2.0 * m[0][1] * phi[0] * phi[1] + m[0][0] * phi[1] * phi[1]) / det;
        return q.max(0.0).sqrt();
    }
    let a = nalgebra::Matrix3::from_fn(|i, j| m[i][j]);
    let v = nalgebra::Vector3::new(phi[0], phi[1], phi[2]);
    match a.cholesky() {
        Some(ch) => v.dot(&ch.solve(&v)).max(0.0).sqrt(),
        None => f64::INFINITY,
    }
}

/// Multilinear periodic interpolation of a `comps`-component nodal array.
pub fn interpolate(grid: &TorusGrid, data: &[f64], comps: usize, p: Point, out: &mut [f64]) {
    let d = grid.dim();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..d {
        let n = grid.res[a] as f64;
        let x = (p[a] * n).rem_euclid(n);
        let i = x.floor();
        base[a] = (i as usize) % grid.res[a];
        frac[a] = x - i;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut c = [0usize; 3];
        for a in 0..d {
            let bit = (corner >> a) & 1;
            c[a] = (base[a] + bit) % grid.res[a];
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
        }
        if w == 0.0 {
            continue;
        }
        let node = grid.index(c);
        for (k, o) in out.iter_mut().enumerate() {
            *o += w * data[node * comps + k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_indexing() {
        let g = TorusGrid::cube(2, 8).unwrap();
        let n = g.index([7, 0, 0]);
        assert_eq!(g.coords(g.shift(n, 0, 1)), [0, 0, 0]);
        assert_eq!(g.coords(g.shift(n, 1, -1)), [7, 7, 0]);
        assert!(TorusGrid::cube(2, 7).is_err());
    }

    #[test]
    fn gradient_of_linear_periodic_part_and_curl_zero() {
        let g = TorusGrid::cube(2, 16).unwrap();
        let f = ScalarField::from_fn(g, |_, p| (2.0 * std::f64::consts::PI * p[0]).sin() * p[1].cos());
        let grad = f.gradient();
        let (curl, _) = grad.max_exterior_derivative();
        assert!(curl < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_wraps() {
        let g = TorusGrid::cube(3, 4).unwrap();
        let f = ScalarField::from_fn(g, |n, _| n as f64);
        assert_eq!(f.interpolate(g.position(5)), 5.0);
        assert_eq!(f.interpolate([1.0, 0.0, 0.0]), 0.0);
        let mid = f.interpolate([0.125, 0.0, 0.0]);
        assert!((mid - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dual_norm_matches_conformal_scaling() {
        let m = [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]];
        assert!((dual_norm(&m, [3.0, 0.0, 0.0], 2) - 1.5).abs() < 1e-15);
        assert!((dual_norm(&m, [0.0, 0.0, 2.0], 3) - 1.0).abs() < 1e-15);
    }
}
