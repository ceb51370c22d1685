//! Nearest-point projection onto a curve and the resulting distance field.

use rayon::prelude::*;
use serde::Serialize;

use super::curve::SubmanifoldCurve;
use super::grid::{dot, norm, sub, wrap, Point, TorusGrid};
use crate::error::{invalid, CalibError, Result};

pub const COARSE_SEEDS: usize = 256;
pub const MIN_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TubeOptions {
    /// ε = factor · reach.
    pub epsilon_factor: f64,
    /// Optional upper bound on ε (e.g. from the distance to another curve).
    pub epsilon_cap: Option<f64>,
    /// Projections are computed out to extent · ε.
    pub extent: f64,
}

impl Default for TubeOptions {
    fn default() -> Self {
        Self {
            epsilon_factor: 0.8,
            epsilon_cap: None,
            extent: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TubularData {
    pub grid: TorusGrid,
    pub reach: f64,
    pub epsilon: f64,
    /// Curve parameter of the nearest point in [0, 1); NaN where not computed.
    pub t: Vec<f64>,
    /// Distance to the curve (coarse estimate where t is NaN).
    pub d: Vec<f64>,
    /// d < ε.
    pub mask: Vec<bool>,
    pub extent: f64,
}

/// Newton outcome for one seed.
fn newton(curve: &SubmanifoldCurve, x: Point, seed: f64, dim: usize) -> Option<f64> {
    let c0 = curve.eval(seed);
    let y = {
        let r = wrap(sub(x, c0.p), dim);
        [c0.p[0] + r[0], c0.p[1] + r[1], c0.p[2] + r[2]]
    };
    let energy = |t: f64| {
        let r = sub(y, curve.eval(t).p);
        0.5 * dot(r, r)
    };
    let max_step = 1.0 / COARSE_SEEDS as f64;
    let mut t = seed;
    let mut e = energy(t);
    for _ in 0..100 {
        let c = curve.eval(t);
        let r = sub(y, c.p);
        let g = -dot(r, c.dp);
        let h = dot(c.dp, c.dp) - dot(r, c.ddp);
        let mut step = if h > 0.0 { -g / h } else { -g / dot(c.dp, c.dp) };
        step = step.clamp(-max_step, max_step);
        if step.abs() < 1e-15 {
            return Some(t);
        }
        let mut accepted = false;
        for _ in 0..40 {
            let et = energy(t + step);
            if et <= e {
                t += step;
                e = et;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step.abs() < 1e-15 {
            return Some(t);
        }
    }
    None
}

/// Project one point: (t in [0,1), distance, both seeds agree).
pub fn project(curve: &SubmanifoldCurve, x: Point, seeds: &[Point]) -> (f64, f64, Option<String>) {
    let dim = curve.dim();
    let n = seeds.len();
    let (mut best, mut bd) = (0usize, f64::INFINITY);
    for (k, s) in seeds.iter().enumerate() {
        let r = wrap(sub(x, *s), dim);
        let d = dot(r, r);
        if d < bd {
            bd = d;
            best = k;
        }
    }
    let dist_to = |k: usize| norm(wrap(sub(x, seeds[k % n]), dim));
    let other = if dist_to(best + 1) < dist_to(best + n - 1) { best + 1 } else { best + n - 1 };
    let t1 = newton(curve, x, best as f64 / n as f64, dim);
    let t2 = newton(curve, x, other as f64 / n as f64 - if other >= n { 1.0 } else { 0.0 }, dim);
    let finish = |t: f64| {
        let tt = t.rem_euclid(1.0);
        let c = curve.eval(tt);
        (tt, norm(wrap(sub(x, c.p), dim)))
    };
    match (t1, t2) {
        (Some(a), Some(b)) => {
            let (ta, da) = finish(a);
            let (tb, db) = finish(b);
            let mut gap = (ta - tb).abs();
            gap = gap.min(1.0 - gap);
            let note = (gap > 1e-8).then(|| format!("seeds disagree by {gap:.3e} in parameter"));
            if da <= db {
                (ta, da, note)
            } else {
                (tb, db, note)
            }
        }
        (Some(a), None) | (None, Some(a)) => {
            let (t, d) = finish(a);
            (t, d, Some("one Newton run did not converge".into()))
        }
        (None, None) => (f64::NAN, bd.sqrt(), Some("Newton did not converge".into())),
    }
}

pub fn build_tubular(curve: &SubmanifoldCurve, grid: TorusGrid, opts: &TubeOptions) -> Result<TubularData> {
    if curve.dim() != grid.dim() {
        return Err(CalibError::DimensionMismatch(format!(
            "curve in T^{} on a grid over T^{}",
            curve.dim(),
            grid.dim()
        )));
    }
    if grid.resolution().iter().any(|&n| n < MIN_RESOLUTION) {
        return invalid(format!("tubular data needs ≥ {MIN_RESOLUTION} nodes per axis"));
    }
    if !(opts.epsilon_factor > 0.0 && opts.epsilon_factor <= 0.8) {
        return invalid(format!("epsilon factor must lie in (0, 0.8], got {}", opts.epsilon_factor));
    }
    let reach = curve.reach();
    let mut epsilon = opts.epsilon_factor * reach;
    if let Some(cap) = opts.epsilon_cap {
        epsilon = epsilon.min(cap);
    }
    let seeds: Vec<Point> = (0..COARSE_SEEDS)
        .map(|k| curve.eval(k as f64 / COARSE_SEEDS as f64).p)
        .collect();
    let seed_gap = (0..COARSE_SEEDS)
        .map(|k| norm(sub(curve.eval((k + 1) as f64 / COARSE_SEEDS as f64).p, seeds[k])))
        .fold(0.0, f64::max);
    let radius = opts.extent * epsilon;
    let dim = grid.dim();
    let results: Vec<(f64, f64, Option<String>)> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.position(node);
            let coarse = seeds
                .iter()
                .map(|s| {
                    let r = wrap(sub(x, *s), dim);
                    dot(r, r)
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            if coarse > radius + seed_gap {
                return (f64::NAN, coarse, None);
            }
            project(curve, x, &seeds)
        })
        .collect();
    let mut t = Vec::with_capacity(grid.len());
    let mut d = Vec::with_capacity(grid.len());
    let mut mask = Vec::with_capacity(grid.len());
    for (node, (tn, dn, note)) in results.into_iter().enumerate() {
        let inside = dn < epsilon;
        if inside {
            if let Some(reason) = note {
                return Err(CalibError::Projection { node: grid.coords(node)[..grid.dim()].to_vec(), reason });
            }
        }
        t.push(tn);
        d.push(dn);
        mask.push(inside);
    }
    Ok(TubularData {
        grid,
        reach,
        epsilon,
        t,
        d,
        mask,
        extent: radius,
    })
}

impl TubularData {
    /// Largest deviation of |∇d| from 1 (centered differences) over mask
    /// nodes farther than two cells from the curve whose stencil lies in the mask.
    pub fn distance_gradient_defect(&self) -> f64 {
        let g = self.grid;
        let h = g.spacing();
        (0..g.len())
            .into_par_iter()
            .filter(|&n| self.mask[n] && self.d[n] > 2.0 * h)
            .filter_map(|n| {
                let mut s = 0.0;
                for a in 0..g.dim() {
                    let (p, m) = (g.shift(n, a, 1), g.shift(n, a, -1));
                    if !self.mask[p] || !self.mask[m] {
                        return None;
                    }
                    let v = (self.d[p] - self.d[m]) * g.half_inverse_spacing(a);
                    s += v * v;
                }
                Some((s.sqrt() - 1.0).abs())
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Gradient of the projection parameter at a point whose nearest curve
    /// parameter is `t`: p′/(|p′|² − r·p″).
    pub fn parameter_gradient(curve: &SubmanifoldCurve, x: Point, t: f64) -> Point {
        let c = curve.eval(t);
        let r = wrap(sub(x, c.p), curve.dim());
        let den = dot(c.dp, c.dp) - dot(r, c.ddp);
        [c.dp[0] / den, c.dp[1] / den, c.dp[2] / den]
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}
