//! Comass ‖φ‖*_g: the maximum of φ over g-unit simple p-vectors.
//!
//! Every engine works in g-orthonormal coordinates (φ pulled back by a
//! g-orthonormal basis), so each reduces to the Euclidean problem. The upper
//! certificate is always the coefficient ℓ¹ norm in those coordinates.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CalibError, Result};
use crate::linalg::{g_complement, minor_det};
use crate::multilinear::{
    eval, gram_norm, hodge_star_orthonormal, index_basis, orthonormal_factor, AltForm, Frame,
    MetricPoint,
};
use crate::seeds;

pub const MAX_ASCENT_ITERS: usize = 10_000;
const BRUTEFORCE_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Ascent,
    Bruteforce,
}

#[derive(Debug, Clone)]
pub struct ComassEstimate {
    pub lower: f64,
    pub upper: f64,
    pub witness: Frame,
    pub method: Method,
    pub evaluations: u64,
    /// Ascent starts that hit the iteration cap.
    pub nonconverged_starts: usize,
}

impl ComassEstimate {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Serialize)]
struct EstimateJson<'a> {
    lower: f64,
    upper: f64,
    method: Method,
    witness: Vec<Vec<f64>>,
    witness_orientation: f64,
    evals: u64,
    #[serde(skip_serializing_if = "is_zero")]
    nonconverged_starts: &'a usize,
}

fn is_zero(x: &&usize) -> bool {
    **x == 0
}

impl Serialize for ComassEstimate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EstimateJson {
            lower: self.lower,
            upper: self.upper,
            method: self.method,
            witness: self.witness.columns(),
            witness_orientation: self.witness.orientation(),
            evals: self.evaluations,
            nonconverged_starts: &self.nonconverged_starts,
        }
        .serialize(s)
    }
}

/// φ expressed in a g-orthonormal basis E (columns), so that frames X in
/// these coordinates correspond to the frames E·X.
struct Orthonormal {
    basis: DMatrix<f64>,
    form: AltForm,
}

impl Orthonormal {
    fn new(phi: &AltForm, g: &MetricPoint) -> Result<Self> {
        if phi.ambient_dim() != g.dim() {
            return Err(CalibError::DimensionMismatch(format!(
                "form on R^{} with metric on R^{}",
                phi.ambient_dim(),
                g.dim()
            )));
        }
        let basis = g.orthonormal_basis();
        let form = phi.pullback(&basis);
        Ok(Self { basis, form })
    }

    /// Estimate from a witness given in orthonormal coordinates; the lower
    /// value is recomputed from the witness in the original coordinates.
    fn finish(
        &self,
        phi: &AltForm,
        g: &MetricPoint,
        x: DMatrix<f64>,
        upper: f64,
        method: Method,
        evaluations: u64,
    ) -> ComassEstimate {
        let mut witness = Frame::from_matrix_unchecked(&self.basis * x);
        let mut val = witness_value(phi, g, &witness);
        if val < 0.0 {
            witness = witness.reversed();
            val = -val;
        }
        ComassEstimate {
            lower: val,
            upper: upper.max(val),
            witness,
            method,
            evaluations,
            nonconverged_starts: 0,
        }
    }
}

fn witness_value(phi: &AltForm, g: &MetricPoint, w: &Frame) -> f64 {
    let norm = gram_norm(w, g);
    if norm == 0.0 {
        return 0.0;
    }
    eval(phi, w).expect("shapes checked") / norm
}

fn first_axes(n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |i, j| if i == j { 1.0 } else { 0.0 })
}

/// Exact comass for degrees 0, 1, 2, n−2, n−1, n and for decomposable forms.
pub fn comass_exact(phi: &AltForm, g: &MetricPoint) -> Result<ComassEstimate> {
    let on = Orthonormal::new(phi, g)?;
    let b = &on.form;
    let n = b.ambient_dim();
    let p = b.degree();
    let finish = |x: DMatrix<f64>, value: f64| on.finish(phi, g, x, value, Method::Exact, 1);

    if b.is_zero() {
        return Ok(finish(first_axes(n, p), 0.0));
    }
    if p == 0 || p == n {
        return Ok(finish(first_axes(n, p), b.coeffs()[0].abs()));
    }
    if p == 1 {
        let v = DVector::from_column_slice(b.coeffs());
        let nrm = v.norm();
        return Ok(finish(DMatrix::from_column_slice(n, 1, (v / nrm).as_slice()), nrm));
    }
    if p == 2 {
        let (value, x) = two_form_max(b);
        return Ok(finish(x, value));
    }
    if p == n - 1 || p == n - 2 {
        let dual = hodge_star_orthonormal(b);
        let (value, zeta) = if dual.degree() == 1 {
            let v = DVector::from_column_slice(dual.coeffs());
            let nrm = v.norm();
            (nrm, DMatrix::from_column_slice(n, 1, (v / nrm).as_slice()))
        } else {
            two_form_max(&dual)
        };
        let x = g_complement(&zeta, &DMatrix::identity(n, n));
        return Ok(finish(x, value));
    }
    if let Some((value, x)) = decomposable(b) {
        return Ok(finish(x, value));
    }
    Err(CalibError::Unsupported(format!(
        "no exact comass formula for a non-decomposable {p}-form on R^{n}"
    )))
}

/// Largest block coefficient of the skew canonical form and a maximizing pair.
fn two_form_max(b: &AltForm) -> (f64, DMatrix<f64>) {
    let n = b.ambient_dim();
    let mut a = DMatrix::zeros(n, n);
    for (idx, c) in b.terms() {
        a[(idx[0], idx[1])] = c;
        a[(idx[1], idx[0])] = -c;
    }
    let svd = a.svd(true, true);
    let (k, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, s)| if *s > acc.1 { (i, *s) } else { acc });
    let u = svd.u.as_ref().unwrap().column(k).into_owned();
    let v = svd.v_t.as_ref().unwrap().row(k).transpose();
    // u ⟂ v for skew A; orthonormalize anyway to absorb rounding
    let x = orthonormal_factor(DMatrix::from_columns(&[u, v]));
    (sigma, x)
}

/// If `b` is decomposable, return (|c|, orthonormal frame S) with b = c·s₁*∧…∧s_p*.
fn decomposable(b: &AltForm) -> Option<(f64, DMatrix<f64>)> {
    let n = b.ambient_dim();
    let p = b.degree();
    let rows = index_basis(n, p - 1);
    let full = index_basis(n, p);
    // K[J, i] = b(e_J, e_i)
    let mut k = DMatrix::zeros(rows.sets.len(), n);
    for (r, set) in rows.sets.iter().enumerate() {
        for i in 0..n {
            if rows.masks[r] & (1 << i) != 0 {
                continue;
            }
            let mask = (rows.masks[r] | (1 << i)) as usize;
            let pos = full.position[mask];
            let sign = crate::multilinear::shuffle_sign(set, &[i]);
            k[(r, i)] = sign * b.coeffs()[pos];
        }
    }
    let svd = k.svd(false, true);
    let mut sv: Vec<(usize, f64)> = svd.singular_values.iter().copied().enumerate().collect();
    sv.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap());
    let top = sv[0].1;
    if top == 0.0 || sv.len() < p || sv[p - 1].1 <= 1e-9 * top {
        return None;
    }
    if sv.len() > p && sv[p].1 > 1e-12 * top {
        return None;
    }
    let vt = svd.v_t.unwrap();
    let cols: Vec<DVector<f64>> = sv[..p].iter().map(|(i, _)| vt.row(*i).transpose()).collect();
    let s = orthonormal_factor(DMatrix::from_columns(&cols));
    let c = b.eval_matrix(&s);
    let all_cols: Vec<usize> = (0..p).collect();
    let scale = b.max_abs();
    for (set, coeff) in full.sets.iter().zip(b.coeffs()) {
        if (coeff - c * minor_det(&s, set, &all_cols)).abs() > 1e-12 * scale {
            return None;
        }
    }
    Some((c.abs(), s))
}

/// Best of `samples` random orthonormal frames; upper bound from the ℓ¹ norm.
pub fn comass_bruteforce(
    phi: &AltForm,
    g: &MetricPoint,
    samples: usize,
    seed: u64,
) -> Result<ComassEstimate> {
    if samples == 0 {
        return invalid("bruteforce needs at least one sample");
    }
    let on = Orthonormal::new(phi, g)?;
    let b = &on.form;
    let (n, p) = (b.ambient_dim(), b.degree());
    let upper = b.l1_norm();
    let chunks = samples.div_ceil(BRUTEFORCE_CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seeds::rng_for(seed, c as u64);
            let count = BRUTEFORCE_CHUNK.min(samples - c * BRUTEFORCE_CHUNK);
            let mut buf = vec![0.0; n * p];
            let mut best: (f64, usize, Vec<f64>) = (f64::MIN, usize::MAX, Vec::new());
            for i in 0..count {
                sample_orthonormal(n, p, &mut rng, &mut buf);
                let v = eval_colmajor(b, &buf).abs();
                if v > best.0 {
                    best = (v, c * BRUTEFORCE_CHUNK + i, buf.clone());
                }
            }
            best
        })
        .reduce(
            || (f64::MIN, usize::MAX, Vec::new()),
            |a, b| match a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal) {
                Ordering::Greater => a,
                Ordering::Less => b,
                Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            },
        );
    let x = DMatrix::from_column_slice(n, p, &best.2);
    Ok(on.finish(phi, g, x, upper, Method::Bruteforce, samples as u64))
}

/// Gram–Schmidt of Gaussian columns (same law as QR with positive diagonal).
fn sample_orthonormal<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R, out: &mut [f64]) {
    loop {
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        if gram_schmidt_colmajor(n, p, out) {
            return;
        }
    }
}

fn gram_schmidt_colmajor(n: usize, p: usize, x: &mut [f64]) -> bool {
    for j in 0..p {
        for _ in 0..2 {
            for k in 0..j {
                let dot: f64 = (0..n).map(|i| x[k * n + i] * x[j * n + i]).sum();
                for i in 0..n {
                    x[j * n + i] -= dot * x[k * n + i];
                }
            }
        }
        let nrm = (0..n).map(|i| x[j * n + i].powi(2)).sum::<f64>().sqrt();
        if nrm < 1e-12 {
            return false;
        }
        for i in 0..n {
            x[j * n + i] /= nrm;
        }
    }
    true
}

fn small_det(x: &[f64], n: usize, rows: &[usize], p: usize) -> f64 {
    match p {
        0 => 1.0,
        1 => x[rows[0]],
        2 => x[rows[0]] * x[n + rows[1]] - x[rows[1]] * x[n + rows[0]],
        _ => {
            let mut buf = [0.0f64; 64];
            for (i, &r) in rows.iter().enumerate() {
                for j in 0..p {
                    buf[i * p + j] = x[j * n + r];
                }
            }
            crate::linalg::det_in_place(&mut buf[..p * p], p)
        }
    }
}

fn eval_colmajor(b: &AltForm, x: &[f64]) -> f64 {
    let (n, p) = (b.ambient_dim(), b.degree());
    index_basis(n, p)
        .sets
        .iter()
        .zip(b.coeffs())
        .filter(|(_, c)| **c != 0.0)
        .map(|(rows, c)| c * small_det(x, n, rows, p))
        .sum()
}

/// Euclidean gradient of X ↦ b(X) (column-major n×p), by cofactor expansion.
fn gradient_colmajor(b: &AltForm, x: &[f64], grad: &mut [f64]) {
    let (n, p) = (b.ambient_dim(), b.degree());
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut sub_rows = [0usize; 8];
    let mut buf = [0.0f64; 64];
    for (rows, c) in index_basis(n, p).sets.iter().zip(b.coeffs()) {
        if *c == 0.0 {
            continue;
        }
        for (ri, &r) in rows.iter().enumerate() {
            let mut m = 0;
            for (rk, &rr) in rows.iter().enumerate() {
                if rk != ri {
                    sub_rows[m] = rr;
                    m += 1;
                }
            }
            for j in 0..p {
                // minor deleting row ri and column j
                let k = p - 1;
                for (a, &rr) in sub_rows[..k].iter().enumerate() {
                    let mut col = 0;
                    for jj in 0..p {
                        if jj != j {
                            buf[a * k + col] = x[jj * n + rr];
                            col += 1;
                        }
                    }
                }
                let minor = if k == 0 {
                    1.0
                } else {
                    crate::linalg::det_in_place(&mut buf[..k * k], k)
                };
                let sign = if (ri + j) % 2 == 0 { 1.0 } else { -1.0 };
                grad[j * n + r] += c * sign * minor;
            }
        }
    }
}

struct StartOutcome {
    value: f64,
    x: Vec<f64>,
    converged: bool,
    evaluations: u64,
}

fn ascend_start(b: &AltForm, tol: f64, start: Vec<f64>) -> StartOutcome {
    let (n, p) = (b.ambient_dim(), b.degree());
    let mut x = start;
    let mut f = eval_colmajor(b, &x);
    if f < 0.0 {
        for v in x[..n].iter_mut() {
            *v = -*v;
        }
        f = -f;
    }
    let mut evaluations = 1u64;
    let mut grad = vec![0.0; n * p];
    let mut rgrad = vec![0.0; n * p];
    let mut trial = vec![0.0; n * p];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iters = 0;
    while iters < MAX_ASCENT_ITERS {
        iters += 1;
        gradient_colmajor(b, &x, &mut grad);
        evaluations += 1;
        // Riemannian gradient on the Stiefel manifold: G − X sym(XᵀG)
        let mut xtg = [0.0f64; 64];
        for a in 0..p {
            for c in 0..p {
                xtg[a * p + c] = (0..n).map(|i| x[a * n + i] * grad[c * n + i]).sum();
            }
        }
        for j in 0..p {
            for i in 0..n {
                let mut s = grad[j * n + i];
                for a in 0..p {
                    s -= x[a * n + i] * 0.5 * (xtg[a * p + j] + xtg[j * p + a]);
                }
                rgrad[j * n + i] = s;
            }
        }
        let gnorm2: f64 = rgrad.iter().map(|v| v * v).sum();
        if gnorm2.sqrt() < tol {
            converged = true;
            break;
        }
        if gnorm2.sqrt() < NEWTON_SWITCH && p < n {
            break;
        }
        step = (step * 2.0).min(16.0);
        let mut accepted = false;
        while step > 1e-14 {
            for k in 0..n * p {
                trial[k] = x[k] + step * rgrad[k];
            }
            if gram_schmidt_colmajor(n, p, &mut trial) {
                let ft = eval_colmajor(b, &trial);
                evaluations += 1;
                if ft >= f + 1e-4 * step * gnorm2 {
                    std::mem::swap(&mut x, &mut trial);
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent direction left at double precision
            converged = gnorm2.sqrt() < tol.sqrt();
            break;
        }
    }
    if !converged && iters < MAX_ASCENT_ITERS {
        let polished = newton_polish(b, tol, &mut x, &mut f, MAX_ASCENT_ITERS - iters);
        evaluations += polished.0;
        converged = polished.1;
    }
    StartOutcome {
        value: f,
        x,
        converged,
        evaluations,
    }
}

/// Gradient norm below which the ascent hands over to Newton steps.
const NEWTON_SWITCH: f64 = 1e-3;

/// Orthonormal completion of the n×p column-major frame `x` (n×(n−p), column-major).
fn complement_colmajor(n: usize, p: usize, x: &[f64]) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = (0..p).map(|j| x[j * n..(j + 1) * n].to_vec()).collect();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = b.iter().zip(&v).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= dot * bi);
            }
        }
        let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nrm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= nrm);
            basis.push(v);
        }
    }
    basis[p..].concat()
}

/// Saddle-free Newton iterations in the chart Y ↦ span(X + X⊥Y) of the
/// Grassmannian, with a finite-difference Hessian. Returns (evaluations, converged).
fn newton_polish(b: &AltForm, tol: f64, x: &mut Vec<f64>, f: &mut f64, budget: usize) -> (u64, bool) {
    let (n, p) = (b.ambient_dim(), b.degree());
    let q = n - p;
    let d = q * p;
    let mut evaluations = 0u64;
    let mut grad = vec![0.0; n * p];
    let mut z = vec![0.0; n * p];
    for _ in 0..budget.min(60) {
        let perp = complement_colmajor(n, p, x);
        // F(Y) = b(X + X⊥Y)/√det(I + YᵀY); Y is q×p, column-major
        let value = |y: &[f64], z: &mut Vec<f64>| -> f64 {
            for j in 0..p {
                for i in 0..n {
                    let mut s = x[j * n + i];
                    for k in 0..q {
                        s += perp[k * n + i] * y[j * q + k];
                    }
                    z[j * n + i] = s;
                }
            }
            let yty = DMatrix::from_fn(p, p, |a, c| {
                (0..q).map(|k| y[a * q + k] * y[c * q + k]).sum::<f64>() + if a == c { 1.0 } else { 0.0 }
            });
            eval_colmajor(b, z) / yty.determinant().sqrt()
        };
        gradient_colmajor(b, x, &mut grad);
        evaluations += 1;
        let gy = DVector::from_fn(d, |r, _| {
            let (k, j) = (r % q, r / q);
            (0..n).map(|i| perp[k * n + i] * grad[j * n + i]).sum::<f64>()
        });
        if gy.norm() < tol {
            return (evaluations, true);
        }
        let h = 1e-4;
        let mut hess = DMatrix::zeros(d, d);
        let mut y = vec![0.0; d];
        for a in 0..d {
            for c in a..d {
                let mut acc = 0.0;
                for (sa, sc, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                    y.iter_mut().for_each(|v| *v = 0.0);
                    y[a] += sa * h;
                    y[c] += sc * h;
                    acc += w * value(&y, &mut z);
                }
                evaluations += 4;
                hess[(a, c)] = acc / (4.0 * h * h);
                hess[(c, a)] = hess[(a, c)];
            }
        }
        // step along every eigendirection uphill, scaled by |curvature|
        let eig = hess.symmetric_eigen();
        let floor = 1e-8 * eig.eigenvalues.amax().max(1e-300);
        let mut step = DVector::zeros(d);
        for (i, lambda) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            step += v * (v.dot(&gy) / lambda.abs().max(floor));
        }
        let cap = 0.5 / step.norm().max(0.5);
        step *= cap.min(1.0);
        let mut accepted = false;
        for _ in 0..30 {
            let fy = value(step.as_slice(), &mut z);
            evaluations += 1;
            if fy > *f {
                if gram_schmidt_colmajor(n, p, &mut z) {
                    std::mem::swap(x, &mut z);
                    *f = eval_colmajor(b, x);
                    accepted = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return (evaluations, gy.norm() < tol.sqrt());
        }
    }
    (evaluations, false)
}

/// Multistart projected-gradient ascent over orthonormal frames with QR retraction.
pub fn comass_ascent(
    phi: &AltForm,
    g: &MetricPoint,
    starts: usize,
    tol: f64,
    seed: u64,
) -> Result<ComassEstimate> {
    if starts == 0 {
        return invalid("ascent needs at least one start");
    }
    if !(tol > 0.0) {
        return invalid("ascent tolerance must be positive");
    }
    let on = Orthonormal::new(phi, g)?;
    let (n, p) = (on.form.ambient_dim(), on.form.degree());
    let upper = on.form.l1_norm();
    if on.form.is_zero() || p == 0 || p == n {
        let mut est = comass_exact(phi, g)?;
        est.method = Method::Ascent;
        return Ok(est);
    }
    // normalized so that step sizes and tolerances are scale free
    let scale = upper;
    let b = on.form.scaled(1.0 / scale);
    let outcomes: Vec<StartOutcome> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = seeds::rng_for(seed, s as u64);
            let mut x0 = vec![0.0; n * p];
            sample_orthonormal(n, p, &mut rng, &mut x0);
            ascend_start(&b, tol, x0)
        })
        .collect();
    let converged = outcomes.iter().filter(|o| o.converged).count();
    if converged == 0 {
        return Err(CalibError::AscentFailed { starts });
    }
    let evaluations = outcomes.iter().map(|o| o.evaluations).sum();
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for o in &outcomes {
        let witness = &on.basis * DMatrix::from_column_slice(n, p, &o.x);
        best = match best {
            None => Some((o.value, witness)),
            Some((bv, bw)) => {
                if o.value > bv + 1e-12 || ((o.value - bv).abs() <= 1e-12 && lex_less(&witness, &bw)) {
                    Some((o.value, witness))
                } else {
                    Some((bv, bw))
                }
            }
        };
    }
    let (_, w) = best.expect("starts ≥ 1");
    let x = on
        .basis
        .clone()
        .try_inverse()
        .expect("basis invertible")
        * w;
    let mut est = on.finish(phi, g, x, upper, Method::Ascent, evaluations);
    est.nonconverged_starts = starts - converged;
    Ok(est)
}

fn lex_less(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[derive(Debug, Clone, Copy)]
pub struct ComassConfig {
    pub starts: usize,
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ComassConfig {
    fn default() -> Self {
        Self {
            starts: 32,
            tol: 1e-9,
            samples: 20_000,
            seed: 0,
        }
    }
}

/// Exact when supported, otherwise ascent cross-checked against bruteforce.
pub fn comass(phi: &AltForm, g: &MetricPoint) -> Result<ComassEstimate> {
    comass_with(phi, g, &ComassConfig::default())
}

pub fn comass_with(phi: &AltForm, g: &MetricPoint, cfg: &ComassConfig) -> Result<ComassEstimate> {
    match comass_exact(phi, g) {
        Ok(est) => return Ok(est),
        Err(CalibError::Unsupported(_)) => {}
        Err(e) => return Err(e),
    }
    let asc = comass_ascent(phi, g, cfg.starts, cfg.tol, cfg.seed)?;
    let bf = comass_bruteforce(phi, g, cfg.samples, cfg.seed)?;
    let evaluations = asc.evaluations + bf.evaluations;
    let upper = asc.upper.min(bf.upper);
    let mut best = if bf.lower > asc.lower { bf } else { asc };
    best.upper = upper.max(best.lower);
    best.evaluations = evaluations;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(n: usize, idx: &[usize]) -> AltForm {
        AltForm::axis(n, idx)
    }

    #[test]
    fn exact_degree_two_examples() {
        let id = MetricPoint::identity(4);
        let k = e(4, &[0, 1]) + e(4, &[2, 3]);
        let est = comass_exact(&k, &id).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-12);
        assert!(est.width() <= 1e-9);
        let k2 = e(4, &[0, 1]).scaled(2.0) + e(4, &[2, 3]);
        assert!((comass_exact(&k2, &id).unwrap().lower - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_covector() {
        let dx = AltForm::from_coeffs(3, 1, vec![3.0, 0.0, 0.0]).unwrap();
        let est = comass_exact(&dx, &MetricPoint::identity(3)).unwrap();
        assert_eq!(est.method, Method::Exact);
        assert!((est.lower - 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_unsupported_is_explicit() {
        let phi = e(6, &[0, 1, 2]) + e(6, &[3, 4, 5]);
        assert!(matches!(
            comass_exact(&phi, &MetricPoint::identity(6)),
            Err(CalibError::Unsupported(_))
        ));
    }

    #[test]
    fn decomposable_three_form_is_exact() {
        let phi = e(6, &[0, 2, 4]).scaled(-1.5);
        let est = comass_exact(&phi, &MetricPoint::identity(6)).unwrap();
        assert!((est.lower - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bruteforce_examples() {
        let id = MetricPoint::identity(4);
        let z = AltForm::zeros(4, 2);
        let est = comass_bruteforce(&z, &id, 10, 0).unwrap();
        assert_eq!((est.lower, est.upper), (0.0, 0.0));
        let est = comass_bruteforce(&e(4, &[0, 1]), &id, 1000, 0).unwrap();
        assert!(est.lower <= 1.0 + 1e-12);
        assert_eq!(est.upper, 1.0);
        let k = e(4, &[0, 1]) + e(4, &[2, 3]);
        let est = comass_bruteforce(&k, &id, 100_000, 5).unwrap();
        assert!(est.lower >= 0.99 && est.lower <= 1.0 + 1e-12, "{}", est.lower);
        assert_eq!(est.upper, 2.0);
    }

    #[test]
    fn ascent_examples() {
        let id = MetricPoint::identity(4);
        let est = comass_ascent(&e(4, &[0, 1]), &id, 4, 1e-10, 0).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-8);
        let k = e(4, &[0, 1]) + e(4, &[2, 3]);
        let est = comass_ascent(&k, &id, 16, 1e-10, 0).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dispatcher_on_special_lagrangian_type_form() {
        let phi = e(6, &[0, 1, 2]) + e(6, &[3, 4, 5]);
        let est = comass(&phi, &MetricPoint::identity(6)).unwrap();
        assert!((est.lower - 1.0).abs() < 1e-4, "{}", est.lower);
        assert!(est.lower <= est.upper);
    }

    #[test]
    fn witness_reproduces_lower() {
        let g = MetricPoint::diagonal(&[1.0, 2.0, 0.5, 3.0, 1.5]).unwrap();
        let phi = AltForm::from_terms(
            5,
            3,
            &[(vec![0, 1, 2], 1.0), (vec![1, 3, 4], -0.7), (vec![0, 2, 4], 0.4)],
        )
        .unwrap();
        let est = comass(&phi, &g).unwrap();
        let v = eval(&phi, &est.witness).unwrap() / gram_norm(&est.witness, &g);
        assert!((v - est.lower).abs() < 1e-9);
    }

    #[test]
    fn estimate_json_keys() {
        let est = comass(&e(3, &[0]), &MetricPoint::identity(3)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&est).unwrap();
        for k in ["lower", "upper", "method", "witness", "evals"] {
            assert!(v.get(k).is_some(), "missing {k}");
        }
        assert_eq!(v["method"], "exact");
    }
}
