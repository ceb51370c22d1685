//! The glued metric g̃ = Σσᵢ(1 + d̂ᵢ²)‖Φᵢ‖²g + α(1 − Σσᵢ)g on a flat torus.

use rayon::prelude::*;

use super::cutoff::CutoffProfile;
use super::grid::{dual_norm, CovectorField, MetricField};
use super::tubular::TubularData;
use crate::error::{invalid, CalibError, Result};

pub const ALPHA_SAFETY: f64 = 1.1;

const FLAT: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// One calibrated piece: a form, the tube of the curve it calibrates, and
/// the σ profile blending its local metric in.
pub struct MetricPiece<'a> {
    pub form: &'a CovectorField,
    pub tube: &'a TubularData,
    pub sigma: CutoffProfile,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricOptions {
    /// ℓ in d̂ = d/ℓ inside the (1 + d̂²) factor.
    pub distance_scale: f64,
    /// Required bound on comass(Φᵢ, α·g) everywhere: 1 for a single
    /// curve, 1/2 when several forms must add up to calibrations.
    pub margin: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            distance_scale: 1.0,
            margin: 1.0,
        }
    }
}

/// Largest flat comass of the form over the grid, with its node.
pub fn max_flat_comass(form: &CovectorField) -> (f64, usize) {
    let d = form.grid.dim();
    (0..form.grid.len())
        .into_par_iter()
        .map(|n| (dual_norm(&FLAT, form.at(n), d), n))
        .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
}

/// Smallest α (to bisection precision) with max comass(Φᵢ, α·g) < margin for
/// every form; the strict inequality is enforced by returning the upper end.
pub fn minimal_alpha(forms: &[&CovectorField], margin: f64) -> f64 {
    let worst = forms.iter().map(|f| max_flat_comass(f).0).fold(0.0, f64::max);
    let admissible = |alpha: f64| worst / alpha.sqrt() < margin;
    let mut hi = 1.0;
    while !admissible(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if admissible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn glue_metric(pieces: &[MetricPiece<'_>], alpha: f64, opts: &MetricOptions) -> Result<MetricField> {
    if pieces.is_empty() {
        return invalid("no pieces to glue");
    }
    if !(opts.distance_scale > 0.0) {
        return invalid("distance scale must be positive");
    }
    let grid = pieces[0].tube.grid;
    let dim = grid.dim();
    for p in pieces {
        if p.form.grid != grid || p.tube.grid != grid {
            return Err(CalibError::DimensionMismatch("pieces on different grids".into()));
        }
        let (c, node) = max_flat_comass(p.form);
        if !(alpha > 0.0) || c / alpha.sqrt() >= opts.margin {
            let minimal = (c / opts.margin).powi(2);
            return Err(CalibError::AlphaTooSmall {
                given: alpha,
                minimal,
                node: grid.coords(node)[..dim].to_vec(),
                comass: c / alpha.max(0.0).sqrt(),
            });
        }
    }
    let ell = opts.distance_scale;
    let lambda: Vec<std::result::Result<f64, usize>> = (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let mut total_sigma = 0.0;
            let mut local = 0.0;
            for p in pieces {
                let d = p.tube.d[n];
                let s = p.sigma.value(d);
                if s > 0.0 {
                    let norm = dual_norm(&FLAT, p.form.at(n), dim);
                    let dh = d / ell;
                    total_sigma += s;
                    local += s * (1.0 + dh * dh) * norm * norm;
                }
            }
            if total_sigma > 1.0 + 1e-12 {
                return Err(n);
            }
            Ok(local + alpha * (1.0 - total_sigma).max(0.0))
        })
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    for (n, l) in lambda.into_iter().enumerate() {
        match l {
            Ok(v) if v > 0.0 => out.push(v),
            Ok(_) => {
                return Err(CalibError::Degenerate(format!(
                    "glued metric vanishes at node {:?}",
                    &grid.coords(n)[..dim]
                )))
            }
            Err(n) => {
                return Err(CalibError::TubeOverlap(format!(
                    "σ supports overlap at node {:?}",
                    &grid.coords(n)[..dim]
                )))
            }
        }
    }
    Ok(MetricField::conformal(grid, &out))
}
