//! Small dense helpers shared by the exterior-algebra and comass code.

use nalgebra::{DMatrix, DVector};

/// Determinant of a k×k row-major matrix stored in `a` (k ≤ 8). Destroys `a`.
pub fn det_in_place(a: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..k {
        let mut piv = col;
        let mut best = a[col * k + col].abs();
        for row in col + 1..k {
            let v = a[row * k + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..k {
                a.swap(col * k + c, piv * k + c);
            }
            det = -det;
        }
        let d = a[col * k + col];
        det *= d;
        for row in col + 1..k {
            let f = a[row * k + col] / d;
            if f != 0.0 {
                for c in col + 1..k {
                    a[row * k + c] -= f * a[col * k + c];
                }
            }
        }
    }
    det
}

/// Determinant of the minor of `m` with the given rows and columns.
pub fn minor_det(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    debug_assert_eq!(k, cols.len());
    match k {
        0 => 1.0,
        1 => m[(rows[0], cols[0])],
        2 => {
            m[(rows[0], cols[0])] * m[(rows[1], cols[1])]
                - m[(rows[0], cols[1])] * m[(rows[1], cols[0])]
        }
        _ => {
            let mut buf = [0.0f64; 64];
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    buf[i * k + j] = m[(r, c)];
                }
            }
            det_in_place(&mut buf[..k * k], k)
        }
    }
}

/// Orthonormalize the columns of `v` with respect to the inner product `g`,
/// keeping the flag (each leading span and its orientation) of the input.
/// Returns `None` when the columns are numerically dependent.
pub fn g_orthonormalize(v: &DMatrix<f64>, g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if v.ncols() == 0 {
        return Some(v.clone());
    }
    // Householder QR in coordinates where g is the identity: g = L Lᵀ, y = Lᵀ v.
    let l = g.clone().cholesky()?.l();
    let y = l.transpose() * v;
    let k = v.ncols();
    let qr = y.qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = r.diagonal().amax();
    for i in 0..k {
        let d = r[(i, i)];
        if !(d.abs() > 1e-12 * scale) {
            return None;
        }
        if d < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    l.transpose().solve_upper_triangular(&q)
}

/// A basis of the g-orthogonal complement of span(v), g-orthonormal.
pub fn g_complement(v: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.nrows();
    let p = v.ncols();
    let q = if p > 0 {
        g_orthonormalize(v, g).expect("independent columns")
    } else {
        DMatrix::zeros(n, 0)
    };
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n - p);
    let mut basis: Vec<DVector<f64>> = (0..p).map(|j| q.column(j).into_owned()).collect();
    for i in 0..n {
        if cols.len() == n - p {
            break;
        }
        let mut w = DVector::zeros(n);
        w[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = (b.transpose() * g * &w)[0];
                w -= b * c;
            }
        }
        let nrm = (w.transpose() * g * &w)[0].sqrt();
        if nrm > 1e-6 {
            w /= nrm;
            basis.push(w.clone());
            cols.push(w);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Euclidean principal angles (radians, ascending) between the column spans
/// of `a` and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let id = DMatrix::identity(a.nrows(), a.nrows());
    let qa = g_orthonormalize(a, &id).expect("independent");
    let qb = g_orthonormalize(b, &id).expect("independent");
    let m = qa.transpose() * &qb;
    let mut cos: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    cos.sort_by(|x, y| y.partial_cmp(x).unwrap());
    // small angles from sines: acos loses half the digits near 1
    let rest = &qb - &qa * &m;
    let mut sin: Vec<f64> = rest.svd(false, false).singular_values.iter().copied().collect();
    sin.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cos.iter()
        .enumerate()
        .map(|(i, c)| {
            if *c > std::f64::consts::FRAC_1_SQRT_2 && i < sin.len() {
                sin[i].clamp(0.0, 1.0).asin()
            } else {
                c.clamp(-1.0, 1.0).acos()
            }
        })
        .collect()
}
