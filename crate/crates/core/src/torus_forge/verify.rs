//! Grid certification of a calibration pair (Φ, g̃) for a curve.

use rayon::prelude::*;
use serde::Serialize;

use super::curve::SubmanifoldCurve;
use super::grid::{dot, dual_norm, norm, scale, sub, wrap, CovectorField, MetricField, Point};
use super::tubular::{project, COARSE_SEEDS};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    pub d_phi: f64,
    /// Allowed excess of the node comass over 1.
    pub comass: f64,
    /// Allowed |comass − 1| at curve samples.
    pub on_curve: f64,
    /// Equality locus: nodes with comass > 1 − delta.
    pub delta: f64,
    pub locus_cells: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            d_phi: 1e-4,
            comass: 2e-3,
            on_curve: 1e-3,
            delta: 1e-3,
            locus_cells: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub check: String,
    pub value: f64,
    pub threshold: f64,
    /// Grid node (indices) or curve parameter where the violation sits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub d_phi_max: f64,
    pub comass_max: f64,
    #[serde(rename = "comass_on_M")]
    pub comass_on_m: Range,
    /// Φ(T)/|T|_g̃ along the oriented curve.
    #[serde(rename = "calibration_on_M")]
    pub calibration_on_m: Range,
    /// None when the locus is empty.
    pub equality_locus_hausdorff_cells: Option<f64>,
    pub equality_locus_nodes: usize,
    /// Fraction of locus nodes farther than `locus_cells` from the curve.
    pub equality_locus_far_fraction: f64,
    pub comass_violations: usize,
    pub thresholds: Thresholds,
    pub pass: bool,
    pub failures: Vec<Failure>,
}

fn node_failure(check: &str, value: f64, threshold: f64, phi: &CovectorField, n: usize) -> Failure {
    let g = phi.grid;
    Failure {
        check: check.into(),
        value,
        threshold,
        node: Some(g.coords(n)[..g.dim()].to_vec()),
        position: Some(g.position(n)[..g.dim()].to_vec()),
        parameter: None,
    }
}

/// Node comass of Φ under g̃.
pub fn comass_field(phi: &CovectorField, metric: &MetricField) -> Vec<f64> {
    let d = phi.grid.dim();
    (0..phi.grid.len())
        .into_par_iter()
        .map(|n| dual_norm(&metric.at(n), phi.at(n), d))
        .collect()
}

/// (comass, calibration value) of interpolated (Φ, g̃) at a curve parameter.
pub fn on_curve(phi: &CovectorField, metric: &MetricField, curve: &SubmanifoldCurve, t: f64) -> (f64, f64) {
    let c = curve.eval(t);
    let m = metric.interpolate(c.p);
    let v = phi.interpolate(c.p);
    let tangent = scale(c.dp, curve.orientation);
    let len = MetricField::quadratic(&m, tangent).sqrt();
    (dual_norm(&m, v, curve.dim()), dot(v, tangent) / len)
}

pub fn verify_pair(
    phi: &CovectorField,
    metric: &MetricField,
    curve: &SubmanifoldCurve,
    thresholds: &Thresholds,
) -> CertificationReport {
    let grid = phi.grid;
    let dim = grid.dim();
    let h = grid.spacing();
    let mut failures = Vec::new();

    let (d_phi_max, d_node) = phi.max_exterior_derivative();
    if !(d_phi_max <= thresholds.d_phi) {
        failures.push(node_failure("d_phi", d_phi_max, thresholds.d_phi, phi, d_node));
    }

    let comass = comass_field(phi, metric);
    let (comass_max, c_node) = comass
        .iter()
        .enumerate()
        .fold((0.0, 0), |acc, (n, &c)| if c > acc.0 { (c, n) } else { acc });
    let limit = 1.0 + thresholds.comass;
    let violations: Vec<usize> = (0..grid.len()).filter(|&n| comass[n] > limit).collect();
    if !violations.is_empty() {
        failures.push(node_failure("comass_max", comass_max, limit, phi, c_node));
        // a few more located violations, spread over the list
        let step = (violations.len() / 4).max(1);
        for &n in violations.iter().step_by(step).take(4) {
            if n != c_node {
                failures.push(node_failure("comass", comass[n], limit, phi, n));
            }
        }
    }

    let samples = curve.samples();
    let vals: Vec<(f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / samples as f64;
            let (c, cal) = on_curve(phi, metric, curve, t);
            (c, cal, t)
        })
        .collect();
    let mut on_m = Range { min: f64::INFINITY, max: f64::NEG_INFINITY };
    let mut cal_m = Range { min: f64::INFINITY, max: f64::NEG_INFINITY };
    let mut worst = (0.0, 0.0);
    for &(c, cal, t) in &vals {
        on_m.min = on_m.min.min(c);
        on_m.max = on_m.max.max(c);
        cal_m.min = cal_m.min.min(cal);
        cal_m.max = cal_m.max.max(cal);
        if (c - 1.0).abs() > worst.0 {
            worst = ((c - 1.0).abs(), t);
        }
    }
    if worst.0 > thresholds.on_curve {
        failures.push(Failure {
            check: "comass_on_M".into(),
            value: worst.0,
            threshold: thresholds.on_curve,
            node: None,
            position: Some(curve.eval(worst.1).p[..dim].to_vec()),
            parameter: Some(worst.1),
        });
    }

    // equality locus and its Hausdorff distance to the curve
    let locus: Vec<usize> = (0..grid.len())
        .filter(|&n| comass[n] > 1.0 - thresholds.delta)
        .collect();
    let seeds: Vec<Point> = (0..COARSE_SEEDS)
        .map(|k| curve.eval(k as f64 / COARSE_SEEDS as f64).p)
        .collect();
    let locus_d: Vec<f64> = locus
        .par_iter()
        .map(|&n| project(curve, grid.position(n), &seeds).1)
        .collect();
    let far = locus_d.iter().filter(|&&d| d > thresholds.locus_cells * h).count();
    let hausdorff = if locus.is_empty() {
        None
    } else {
        let one = locus_d.iter().fold(0.0f64, |a, &b| a.max(b));
        let pts: Vec<Point> = locus.iter().map(|&n| grid.position(n)).collect();
        let other = (0..samples)
            .into_par_iter()
            .map(|k| {
                let p = curve.eval(k as f64 / samples as f64).p;
                pts.iter()
                    .map(|q| norm(wrap(sub(*q, p), dim)))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max);
        Some(one.max(other) / h)
    };
    match hausdorff {
        None => failures.push(Failure {
            check: "equality_locus".into(),
            value: f64::MAX,
            threshold: thresholds.locus_cells,
            node: None,
            position: None,
            parameter: None,
        }),
        Some(v) if v > thresholds.locus_cells => {
            let (i, _) = locus_d
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
            failures.push(node_failure("equality_locus_hausdorff_cells", v, thresholds.locus_cells, phi, locus[i]));
        }
        _ => {}
    }

    CertificationReport {
        d_phi_max,
        comass_max,
        comass_on_m: on_m,
        calibration_on_m: cal_m,
        equality_locus_hausdorff_cells: hausdorff,
        equality_locus_nodes: locus.len(),
        equality_locus_far_fraction: if locus.is_empty() { 0.0 } else { far as f64 / locus.len() as f64 },
        comass_violations: violations.len(),
        thresholds: *thresholds,
        pass: failures.is_empty(),
        failures,
    }
}
