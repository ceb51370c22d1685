//! Weighted piecewise-linear loops as 1-currents, their masses under grid
//! metrics, and homological minimization trials.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::seeds::rng_for;
use crate::torus_forge::curve::GL5;
use crate::torus_forge::grid::{add, dot, norm, scale, sub, wrap, CovectorField, MetricField, Point};
use crate::torus_forge::{ClosedForm, SubmanifoldCurve};

/// Edges shorter than this are merged away.
const MIN_EDGE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct PLLoop {
    dim: usize,
    /// Lifted vertices; the closing edge runs from the last vertex to `lifted[0] + winding`.
    lifted: Vec<Point>,
    winding: [i64; 3],
    pub weight: f64,
}

impl PLLoop {
    /// From lifted vertices whose final entry is the lift of the first vertex
    /// after one trip around the loop.
    pub fn from_closed_lift(dim: usize, mut path: Vec<Point>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return invalid(format!("dimension {dim} outside 1..=3"));
        }
        if path.len() < 2 {
            return invalid("a closed lift needs at least two points");
        }
        let end = path.pop().unwrap();
        let shift = sub(end, path[0]);
        let mut winding = [0i64; 3];
        for i in 0..dim {
            let r = shift[i].round();
            if (shift[i] - r).abs() > 1e-9 {
                return invalid(format!("lift closes with non-integral offset {} on axis {i}", shift[i]));
            }
            winding[i] = r as i64;
        }
        Self::new(dim, path, winding)
    }

    pub fn new(dim: usize, lifted: Vec<Point>, winding: [i64; 3]) -> Result<Self> {
        let w = winding.map(|x| x as f64);
        let mut merged: Vec<Point> = Vec::with_capacity(lifted.len());
        for p in lifted {
            let mut q = [0.0; 3];
            q[..dim].copy_from_slice(&p[..dim]);
            if merged.last().is_none_or(|l| norm(sub(q, *l)) > MIN_EDGE) {
                merged.push(q);
            }
        }
        while merged.len() > 1 && norm(sub(add(merged[0], w), *merged.last().unwrap())) <= MIN_EDGE {
            merged.pop();
        }
        if merged.is_empty() || (merged.len() == 1 && winding == [0; 3]) {
            return invalid("loop has no edges");
        }
        Ok(Self {
            dim,
            lifted: merged,
            winding,
            weight: 1.0,
        })
    }

    /// Polygon through the spline samples of a curve.
    pub fn from_curve(curve: &SubmanifoldCurve) -> Self {
        let w = curve.winding_vector().map(|x| x as i64);
        Self::new(curve.dim(), curve.vertices(), w).expect("sampled curves have edges")
    }

    /// Straight closed geodesic through `base` in class `winding`, with `n` vertices.
    pub fn straight(dim: usize, base: Point, winding: [i64; 3], n: usize) -> Result<Self> {
        let w = winding.map(|x| x as f64);
        let pts = (0..n).map(|k| add(base, scale(w, k as f64 / n as f64))).collect();
        Self::new(dim, pts, winding)
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn winding(&self) -> [i64; 3] {
        self.winding
    }

    pub fn len(&self) -> usize {
        self.lifted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lifted.is_empty()
    }

    pub fn lifted(&self) -> &[Point] {
        &self.lifted
    }

    /// Vertices reduced to the fundamental domain.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        self.lifted
            .iter()
            .map(|p| p[..self.dim].iter().map(|x| x.rem_euclid(1.0)).collect())
            .collect()
    }

    /// Edges as lifted (start, end) pairs, closing edge last.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let w = self.winding.map(|x| x as f64);
        let n = self.lifted.len();
        (0..n).map(move |k| {
            let b = if k + 1 < n { self.lifted[k + 1] } else { add(self.lifted[0], w) };
            (self.lifted[k], b)
        })
    }

    /// Same loop starting at vertex `k`.
    pub fn rotated(&self, k: usize) -> Self {
        let n = self.lifted.len();
        let w = self.winding.map(|x| x as f64);
        let k = k % n;
        let mut v: Vec<Point> = self.lifted[k..].to_vec();
        v.extend(self.lifted[..k].iter().map(|p| add(*p, w)));
        Self {
            lifted: v,
            ..self.clone()
        }
    }

    /// Every edge split at its midpoint.
    pub fn refined(&self) -> Self {
        let mut v = Vec::with_capacity(2 * self.lifted.len());
        for (a, b) in self.edges() {
            v.push(a);
            v.push(scale(add(a, b), 0.5));
        }
        Self {
            lifted: v,
            ..self.clone()
        }
    }

    fn quadrature<T: Send>(&self, f: impl Fn(Point, Point) -> T + Sync) -> Vec<T> {
        let edges: Vec<(Point, Point)> = self.edges().collect();
        edges
            .par_iter()
            .flat_map_iter(|&(a, b)| {
                let e = sub(b, a);
                GL5.iter().map(move |&(x, _)| (add(a, scale(e, 0.5 * (x + 1.0))), e))
            })
            .map(|(p, e)| f(wrap(p, self.dim), e))
            .collect()
    }

    /// Ordered sum of per-node values with GL5 weights (deterministic).
    fn integrate(&self, vals: &[f64]) -> f64 {
        vals.chunks(GL5.len())
            .map(|c| c.iter().zip(GL5.iter()).map(|(v, (_, w))| 0.5 * w * v).sum::<f64>())
            .sum()
    }
}

/// Mass of a weighted loop: |w| · ∫ √g(γ′, γ′) with the metric interpolated multilinearly.
pub fn pl_mass(l: &PLLoop, g: &MetricField) -> f64 {
    let vals = l.quadrature(|p, e| MetricField::quadratic(&g.interpolate(p), e).max(0.0).sqrt());
    l.weight.abs() * l.integrate(&vals)
}

/// ∫_L Φ by quadrature of the interpolated nodal covectors.
pub fn period_pairing(l: &PLLoop, phi: &CovectorField) -> f64 {
    let vals = l.quadrature(|p, e| dot(phi.interpolate(p), e));
    l.weight * l.integrate(&vals)
}

/// ∫_L Φ through the potential of a discretely exact form; depends only on the winding
/// up to interpolation round-off.
pub fn period_pairing_exact(l: &PLLoop, phi: &ClosedForm) -> f64 {
    l.weight * l.edges().map(|(a, b)| phi.line_integral(a, b)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointwiseCalibration {
    /// max Φ(γ′)/|γ′|_g over quadrature nodes.
    pub max_ratio: f64,
    pub max_at: [f64; 3],
    /// min Φ(γ′)/|γ′|_g over quadrature nodes.
    pub min_ratio: f64,
}

pub fn pointwise_calibration(l: &PLLoop, phi: &CovectorField, g: &MetricField) -> PointwiseCalibration {
    let vals = l.quadrature(|p, e| {
        let len = MetricField::quadratic(&g.interpolate(p), e).max(0.0).sqrt();
        let r = if len > 0.0 { l.weight.signum() * dot(phi.interpolate(p), e) / len } else { 0.0 };
        (r, p)
    });
    let mut out = PointwiseCalibration {
        max_ratio: f64::NEG_INFINITY,
        max_at: [0.0; 3],
        min_ratio: f64::INFINITY,
    };
    for (r, p) in vals {
        if r > out.max_ratio {
            out.max_ratio = r;
            out.max_at = p;
        }
        out.min_ratio = out.min_ratio.min(r);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitorOptions {
    /// Vertices per Fourier mode.
    pub vertices_per_mode: usize,
    /// Mode k has coefficient magnitudes ≤ amplitude / k² per axis.
    pub amplitude: f64,
}

impl Default for CompetitorOptions {
    fn default() -> Self {
        Self {
            vertices_per_mode: 64,
            amplitude: 0.08,
        }
    }
}

/// Straight loop in class `winding` through a random base point plus `complexity`
/// random Fourier modes. Immersed, not necessarily embedded.
pub fn random_competitor(
    dim: usize,
    winding: [i64; 3],
    seed: u64,
    complexity: usize,
    opts: &CompetitorOptions,
) -> Result<PLLoop> {
    if complexity < 3 {
        return invalid(format!("complexity {complexity} < 3"));
    }
    let mut rng = rng_for(seed, 0);
    let mut base = [0.0; 3];
    for b in base.iter_mut().take(dim) {
        *b = rng.random::<f64>();
    }
    let mut modes = Vec::with_capacity(complexity);
    for k in 1..=complexity {
        let mut coef = [[0.0; 2]; 3];
        for c in coef.iter_mut().take(dim) {
            for x in c.iter_mut() {
                *x = opts.amplitude / (k * k) as f64 * rng.random_range(-1.0..=1.0);
            }
        }
        modes.push(coef);
    }
    let w = winding.map(|x| x as f64);
    let n = (opts.vertices_per_mode * complexity).max(256);
    let pts = (0..n)
        .map(|j| {
            let s = j as f64 / n as f64;
            let mut p = add(base, scale(w, s));
            for (k, coef) in modes.iter().enumerate() {
                let a = std::f64::consts::TAU * (k + 1) as f64 * s;
                for i in 0..dim {
                    p[i] += coef[i][0] * a.cos() + coef[i][1] * a.sin();
                }
            }
            p
        })
        .collect();
    PLLoop::new(dim, pts, winding)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompetitorRecord {
    pub index: usize,
    pub masses: Vec<f64>,
    pub mass: f64,
    pub period: f64,
    pub max_pointwise_ratio: f64,
    pub max_ratio_at: Vec<f64>,
    /// Wrapped vertices per loop; kept only for the worst record of each list.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrictnessCheck {
    /// Competitors whose pointwise calibration ratio drops below 0.95 somewhere.
    pub count: usize,
    /// Smallest mass excess over M among them.
    pub min_margin: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct TrialReport {
    pub mass_M: f64,
    pub period_M: f64,
    pub masses: Vec<f64>,
    pub min_margin: Option<f64>,
    pub min_margin_index: Option<usize>,
    pub lower_bound_violations: Vec<CompetitorRecord>,
    pub minimality_violations: Vec<CompetitorRecord>,
    pub max_period_spread: f64,
    pub max_pointwise_ratio: f64,
    pub pointwise_violations: usize,
    pub strictness: StrictnessCheck,
    pub delta_grid: f64,
    pub competitors: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct TrialOptions {
    pub competitors: usize,
    pub seed: u64,
    pub complexity: usize,
    pub delta_grid: f64,
    pub pointwise_tolerance: f64,
    pub competitor: CompetitorOptions,
}

impl Default for TrialOptions {
    fn default() -> Self {
        Self {
            competitors: 200,
            seed: 0,
            complexity: 6,
            delta_grid: 5e-3,
            pointwise_tolerance: 2e-3,
            competitor: CompetitorOptions::default(),
        }
    }
}

/// δ_grid at resolution `n`, given its value 5e-3 at `default_n`.
pub fn delta_grid(n: usize, default_n: usize) -> f64 {
    5e-3 * default_n as f64 / n as f64
}

struct Evaluated {
    masses: Vec<f64>,
    period: f64,
    pointwise: PointwiseCalibration,
}

fn evaluate(loops: &[PLLoop], phi: &ClosedForm, g: &MetricField) -> Evaluated {
    let masses: Vec<f64> = loops.iter().map(|l| pl_mass(l, g)).collect();
    let period = loops.iter().map(|l| period_pairing_exact(l, phi)).sum();
    let mut pointwise = PointwiseCalibration {
        max_ratio: f64::NEG_INFINITY,
        max_at: [0.0; 3],
        min_ratio: f64::INFINITY,
    };
    for l in loops {
        let p = pointwise_calibration(l, phi.nodal(), g);
        if p.max_ratio > pointwise.max_ratio {
            pointwise.max_ratio = p.max_ratio;
            pointwise.max_at = p.max_at;
        }
        pointwise.min_ratio = pointwise.min_ratio.min(p.min_ratio);
    }
    Evaluated {
        masses,
        period,
        pointwise,
    }
}

/// Compares the cycle `m` (one loop per class) against random competitor cycles
/// in the same classes: mass(M) ≤ mass(T) + δ and mass(T) ≥ Φ(T) − δ = Φ(M) − δ.
pub fn minimization_trial(m: &[PLLoop], phi: &ClosedForm, g: &MetricField, opts: &TrialOptions) -> Result<TrialReport> {
    if m.is_empty() {
        return invalid("empty cycle");
    }
    let dim = m[0].dim();
    let em = evaluate(m, phi, g);
    let mass_m: f64 = em.masses.iter().sum();
    let competitors: Vec<Vec<PLLoop>> = (0..opts.competitors)
        .map(|i| {
            m.iter()
                .enumerate()
                .map(|(j, l)| {
                    let s = crate::seeds::derive(opts.seed, (i * m.len() + j) as u64);
                    random_competitor(dim, l.winding(), s, opts.complexity, &opts.competitor)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let evals: Vec<Evaluated> = competitors.par_iter().map(|c| evaluate(c, phi, g)).collect();
    let record = |i: usize, e: &Evaluated| CompetitorRecord {
        index: i,
        masses: e.masses.clone(),
        mass: e.masses.iter().sum(),
        period: e.period,
        max_pointwise_ratio: e.pointwise.max_ratio,
        max_ratio_at: e.pointwise.max_at[..dim].to_vec(),
        vertices: None,
    };
    let attach_worst = |list: &mut Vec<CompetitorRecord>| {
        if let Some(w) = list.iter_mut().min_by(|a, b| a.mass.total_cmp(&b.mass)) {
            w.vertices = Some(competitors[w.index].iter().map(|l| l.vertices()).collect());
        }
    };
    let d = opts.delta_grid;
    let mut masses = Vec::with_capacity(evals.len());
    let mut lower = Vec::new();
    let mut minimality = Vec::new();
    let mut min_margin: Option<(f64, usize)> = None;
    let mut spread: f64 = 0.0;
    let mut max_ratio = em.pointwise.max_ratio;
    let mut pointwise_violations = usize::from(em.pointwise.max_ratio > 1.0 + opts.pointwise_tolerance);
    let mut strict_count = 0;
    let mut strict_margin: Option<f64> = None;
    for (i, e) in evals.iter().enumerate() {
        let mass: f64 = e.masses.iter().sum();
        masses.push(mass);
        let margin = mass - mass_m;
        if min_margin.is_none_or(|(v, _)| margin < v) {
            min_margin = Some((margin, i));
        }
        spread = spread.max((e.period - em.period).abs());
        max_ratio = max_ratio.max(e.pointwise.max_ratio);
        if e.pointwise.max_ratio > 1.0 + opts.pointwise_tolerance {
            pointwise_violations += 1;
        }
        if mass < em.period - d {
            lower.push(record(i, e));
        }
        if margin < -d {
            minimality.push(record(i, e));
        }
        if e.pointwise.min_ratio < 0.95 {
            strict_count += 1;
            strict_margin = Some(strict_margin.map_or(margin, |s: f64| s.min(margin)));
        }
    }
    let strictness = StrictnessCheck {
        count: strict_count,
        min_margin: strict_margin,
        pass: strict_margin.is_none_or(|s| s > 0.0),
    };
    attach_worst(&mut lower);
    attach_worst(&mut minimality);
    let pass = lower.is_empty() && minimality.is_empty() && strictness.pass;
    Ok(TrialReport {
        mass_M: mass_m,
        period_M: em.period,
        masses,
        min_margin: min_margin.map(|m| m.0),
        min_margin_index: min_margin.map(|m| m.1),
        lower_bound_violations: lower,
        minimality_violations: minimality,
        max_period_spread: spread,
        max_pointwise_ratio: max_ratio,
        pointwise_violations,
        strictness,
        delta_grid: d,
        competitors: opts.competitors,
        pass,
    })
}
