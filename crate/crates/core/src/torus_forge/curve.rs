//! Closed curves on the flat torus, interpolated by periodic cubic splines.

use serde::Serialize;

use super::grid::{add, dot, norm, scale, sub, wrap, Point};
use crate::error::{invalid, CalibError, Result};

pub const DEFAULT_SAMPLES: usize = 4096;

#[derive(Debug, Clone, Serialize)]
pub struct SubmanifoldCurve {
    dim: usize,
    /// Lifted samples P_k at t = k/N, continuous in R^d.
    #[serde(skip)]
    lifted: Vec<Point>,
    /// q_k = P_k − w·t_k and its spline second derivatives.
    #[serde(skip)]
    q: Vec<Point>,
    #[serde(skip)]
    m: Vec<Point>,
    pub winding: [i64; 3],
    pub orientation: f64,
    pub name: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub p: Point,
    pub dp: Point,
    pub ddp: Point,
}

impl SubmanifoldCurve {
    /// From torus-coordinate samples at equally spaced parameters; the
    /// winding is read off the wrapped increments.
    pub fn from_samples(dim: usize, samples: &[Point], name: &str) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return invalid(format!("curves live on T² or T³, got dimension {dim}"));
        }
        let n = samples.len();
        if n < 16 {
            return invalid(format!("need at least 16 samples, got {n}"));
        }
        let mut lifted = Vec::with_capacity(n);
        let mut cur = samples[0];
        for a in dim..3 {
            cur[a] = 0.0;
        }
        lifted.push(cur);
        for k in 1..=n {
            let next = samples[k % n];
            let step = wrap(sub(next, samples[k - 1]), dim);
            let mut s = step;
            for a in dim..3 {
                s[a] = 0.0;
            }
            if norm(s) > 0.25 {
                return invalid("consecutive samples more than 1/4 apart; refine the sampling");
            }
            cur = add(cur, s);
            if k < n {
                lifted.push(cur);
            }
        }
        let total = sub(cur, lifted[0]);
        let mut winding = [0i64; 3];
        for a in 0..dim {
            let r = total[a].round();
            if (total[a] - r).abs() > 1e-6 {
                return Err(CalibError::NotEmbedded(format!(
                    "winding component {a} = {} is not integral",
                    total[a]
                )));
            }
            winding[a] = r as i64;
        }
        if winding.iter().all(|&w| w == 0) {
            return invalid("curve is null-homotopic; only nontrivial classes are supported");
        }
        let w = winding.map(|x| x as f64);
        let q: Vec<Point> = lifted
            .iter()
            .enumerate()
            .map(|(k, p)| sub(*p, scale(w, k as f64 / n as f64)))
            .collect();
        let m = periodic_spline_moments(&q, 1.0 / n as f64);
        let curve = Self {
            dim,
            lifted,
            q,
            m,
            winding,
            orientation: 1.0,
            name: name.to_string(),
        };
        curve.check_embedded()?;
        Ok(curve)
    }

    pub fn from_fn(dim: usize, samples: usize, name: &str, f: impl Fn(f64) -> Point) -> Result<Self> {
        let pts: Vec<Point> = (0..samples)
            .map(|k| {
                let mut p = f(k as f64 / samples as f64);
                for x in p.iter_mut() {
                    *x = x.rem_euclid(1.0);
                }
                p
            })
            .collect();
        Self::from_samples(dim, &pts, name)
    }

    /// y = 0.5 + A·sin(2πx) on T².
    pub fn wavy(amplitude: f64, samples: usize) -> Result<Self> {
        let tau = 2.0 * std::f64::consts::PI;
        Self::from_fn(2, samples, "wavy2d", |t| [t, 0.5 + amplitude * (tau * t).sin(), 0.0])
    }

    /// Straight circle through `base` in the direction of coordinate `axis`.
    pub fn straight(dim: usize, axis: usize, base: Point, samples: usize, name: &str) -> Result<Self> {
        Self::from_fn(dim, samples, name, |t| {
            let mut p = base;
            p[axis] += t;
            p
        })
    }

    pub fn reversed(&self) -> Self {
        let mut c = self.clone();
        c.orientation = -self.orientation;
        c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> usize {
        self.lifted.len()
    }

    pub fn winding_vector(&self) -> Point {
        self.winding.map(|x| x as f64)
    }

    /// Lifted sample k (k may exceed the sample count).
    pub fn lifted_sample(&self, k: usize) -> Point {
        let n = self.samples();
        let laps = (k / n) as f64;
        add(self.lifted[k % n], scale(self.winding_vector(), laps))
    }

    /// Spline value and derivatives at any real parameter (lifted).
    pub fn eval(&self, t: f64) -> CurvePoint {
        let n = self.samples();
        let h = 1.0 / n as f64;
        let x = t * n as f64;
        let kf = x.floor();
        let u = x - kf;
        let k = (kf as i64).rem_euclid(n as i64) as usize;
        let k1 = (k + 1) % n;
        let (q0, q1, m0, m1) = (self.q[k], self.q[k1], self.m[k], self.m[k1]);
        let w = self.winding_vector();
        let mut out = CurvePoint {
            p: [0.0; 3],
            dp: [0.0; 3],
            ddp: [0.0; 3],
        };
        let v = 1.0 - u;
        for a in 0..self.dim {
            out.p[a] = v * q0[a]
                + u * q1[a]
                + h * h / 6.0 * ((v * v * v - v) * m0[a] + (u * u * u - u) * m1[a])
                + w[a] * t;
            out.dp[a] = (q1[a] - q0[a]) / h + h / 6.0 * (-(3.0 * v * v - 1.0) * m0[a] + (3.0 * u * u - 1.0) * m1[a])
                + w[a];
            out.ddp[a] = v * m0[a] + u * m1[a];
        }
        out
    }

    pub fn curvature(&self, t: f64) -> f64 {
        let c = self.eval(t);
        let s = norm(c.dp);
        let cross = [
            c.dp[1] * c.ddp[2] - c.dp[2] * c.ddp[1],
            c.dp[2] * c.ddp[0] - c.dp[0] * c.ddp[2],
            c.dp[0] * c.ddp[1] - c.dp[1] * c.ddp[0],
        ];
        norm(cross) / (s * s * s)
    }

    pub fn max_curvature(&self) -> f64 {
        let n = self.samples();
        (0..2 * n)
            .map(|k| self.curvature(k as f64 / (2 * n) as f64))
            .fold(0.0, f64::max)
    }

    /// Arclength from parameter 0 to each sample parameter (5-point
    /// Gauss–Legendre per spline segment); the last entry is the length.
    pub fn cumulative_length(&self) -> Vec<f64> {
        let n = self.samples();
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.segment_integral(k as f64 / n as f64, (k + 1) as f64 / n as f64, |c| norm(c.dp));
            out.push(acc);
        }
        out
    }

    pub fn length(&self) -> f64 {
        *self.cumulative_length().last().unwrap()
    }

    /// ∫_a^b f(γ(t)) dt by 5-point Gauss–Legendre.
    pub fn segment_integral(&self, a: f64, b: f64, f: impl Fn(&CurvePoint) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GL5.iter()
            .map(|(x, w)| w * f(&self.eval(mid + half * x)))
            .sum::<f64>()
            * half
    }

    /// Sample-based embeddedness: every pair more than 20 samples apart
    /// (on a ≤512-point subsample, including lattice images) is farther than
    /// 10 sample spacings.
    fn check_embedded(&self) -> Result<()> {
        let n = self.samples();
        let stride = n.div_ceil(512);
        let idx: Vec<usize> = (0..n).step_by(stride).collect();
        let m = idx.len();
        let spacing = (0..m)
            .map(|i| norm(sub(self.lifted_sample(idx[i] + if i + 1 == m { n - idx[i] } else { idx[i + 1] - idx[i] }), self.lifted[idx[i]])))
            .fold(0.0, f64::max);
        let gap = 20usize;
        for i in 0..m {
            for j in 0..m {
                let sep = i.abs_diff(j).min(m - i.abs_diff(j));
                if sep <= gap {
                    continue;
                }
                let d = norm(wrap(sub(self.lifted[idx[i]], self.lifted[idx[j]]), self.dim));
                if d <= 10.0 * spacing {
                    return Err(CalibError::NotEmbedded(format!(
                        "samples {} and {} are {d:.3e} apart",
                        idx[i], idx[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Half the length of the shortest non-trivial doubly-normal chord,
    /// including chords to lattice translates of the curve.
    pub fn half_bottleneck(&self) -> f64 {
        let n = self.samples();
        let stride = n.div_ceil(512);
        let m = n / stride;
        let pts: Vec<Point> = (0..m).map(|i| self.lifted[i * stride]).collect();
        let w = self.winding_vector();
        let dim = self.dim;
        let range: Vec<i64> = (-2..=2).collect();
        let mut lattice: Vec<Point> = Vec::new();
        for &a in &range {
            for &b in &range {
                if dim == 2 {
                    lattice.push([a as f64, b as f64, 0.0]);
                } else {
                    for &c in &range {
                        lattice.push([a as f64, b as f64, c as f64]);
                    }
                }
            }
        }
        // D(i, j, λ) = |P_i − P_j − λ|, with P_{j+m} = P_j + w
        let dist = |i: isize, j: isize, lam: Point| -> f64 {
            let (ii, li) = (i.rem_euclid(m as isize) as usize, i.div_euclid(m as isize) as f64);
            let (jj, lj) = (j.rem_euclid(m as isize) as usize, j.div_euclid(m as isize) as f64);
            let pi = add(pts[ii], scale(w, li));
            let pj = add(pts[jj], scale(w, lj));
            norm(sub(sub(pi, pj), lam))
        };
        use rayon::prelude::*;
        (0..m)
            .into_par_iter()
            .map(|i| {
                let mut best = f64::INFINITY;
                for j in 0..m {
                    for lam in &lattice {
                        // the only zero of D is the diagonal itself
                        if i == j && lam.iter().all(|x| *x == 0.0) {
                            continue;
                        }
                        let (ii, jj) = (i as isize, j as isize);
                        let v = dist(ii, jj, *lam);
                        if v >= best {
                            continue;
                        }
                        let local = v <= dist(ii + 1, jj, *lam)
                            && v <= dist(ii - 1, jj, *lam)
                            && v <= dist(ii, jj + 1, *lam)
                            && v <= dist(ii, jj - 1, *lam);
                        if local {
                            best = v;
                        }
                    }
                }
                best
            })
            .reduce(|| f64::INFINITY, f64::min)
            * 0.5
    }

    /// min(1/κ_max, half the bottleneck distance).
    pub fn reach(&self) -> f64 {
        let k = self.max_curvature();
        let inv = if k > 1e-12 { 1.0 / k } else { f64::INFINITY };
        inv.min(self.half_bottleneck())
    }

    /// Vertices of the sampled curve (lifted).
    pub fn vertices(&self) -> Vec<Point> {
        self.lifted.clone()
    }
}

/// Second-derivative moments of the periodic cubic spline through `q` with
/// uniform spacing `h` (cyclic tridiagonal system, Gauss–Seidel sweeps).
fn periodic_spline_moments(q: &[Point], h: f64) -> Vec<Point> {
    let n = q.len();
    let rhs: Vec<Point> = (0..n)
        .map(|k| {
            let (a, b, c) = (q[(k + n - 1) % n], q[k], q[(k + 1) % n]);
            let mut r = [0.0; 3];
            for i in 0..3 {
                r[i] = 6.0 * (a[i] - 2.0 * b[i] + c[i]) / (h * h);
            }
            r
        })
        .collect();
    let mut m = vec![[0.0; 3]; n];
    for _ in 0..200 {
        let mut delta: f64 = 0.0;
        for k in 0..n {
            let (a, c) = (m[(k + n - 1) % n], m[(k + 1) % n]);
            for i in 0..3 {
                let v = (rhs[k][i] - a[i] - c[i]) / 4.0;
                delta = delta.max((v - m[k][i]).abs());
                m[k][i] = v;
            }
        }
        let scale = rhs.iter().flat_map(|r| r.iter()).fold(1.0f64, |a, b| a.max(b.abs()));
        if delta <= 1e-15 * scale {
            break;
        }
    }
    m
}

/// 5-point Gauss–Legendre nodes and weights on [−1, 1].
pub const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

pub fn tangent_dot(c: &CurvePoint, v: Point) -> f64 {
    dot(c.dp, v)
}
