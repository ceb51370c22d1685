//! Closed 1-forms on the grid, represented as c − D(F) with a constant
//! harmonic part c and a nodal potential F. Both are rounded to multiples
//! of 2⁻⁴⁰, so the centered differences commute exactly in floating point
//! and the discrete exterior derivative of every such form is exactly zero.

use rayon::prelude::*;
use serde::Serialize;

use super::curve::{SubmanifoldCurve, GL5};
use super::cutoff::CutoffProfile;
use super::grid::{add, dot, norm, scale, sub, wrap, CovectorField, Point, ScalarField, TorusGrid};
use super::tubular::TubularData;
use crate::error::{invalid, CalibError, Result};

const DYADIC: f64 = (1u64 << 40) as f64;

pub fn quantize(x: f64) -> f64 {
    (x * DYADIC).round() / DYADIC
}

#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub grid: TorusGrid,
    pub harmonic: Point,
    pub potential: ScalarField,
    nodal: CovectorField,
}

impl ClosedForm {
    pub fn harmonic(grid: TorusGrid, c: Point) -> Self {
        Self::from_potential(grid, c, ScalarField::zeros(grid))
    }

    pub fn from_potential(grid: TorusGrid, c: Point, mut potential: ScalarField) -> Self {
        let mut c = c.map(quantize);
        for x in c[grid.dim()..].iter_mut() {
            *x = 0.0;
        }
        potential.data.iter_mut().for_each(|f| *f = quantize(*f));
        let grad = potential.gradient();
        let d = grid.dim();
        let data = grad
            .data
            .iter()
            .enumerate()
            .map(|(i, g)| c[i % d] - g)
            .collect();
        Self {
            grid,
            harmonic: c,
            potential,
            nodal: CovectorField { grid, data },
        }
    }

    pub fn nodal(&self) -> &CovectorField {
        &self.nodal
    }

    /// a·self + b·other; exact for a, b ∈ {0, ±1}.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(CalibError::DimensionMismatch("forms on different grids".into()));
        }
        let c = add(scale(self.harmonic, a), scale(other.harmonic, b));
        let f = ScalarField {
            grid: self.grid,
            data: self
                .potential
                .data
                .iter()
                .zip(&other.potential.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        };
        Ok(Self::from_potential(self.grid, c, f))
    }

    pub fn negated(&self) -> Self {
        let f = ScalarField {
            grid: self.grid,
            data: self.potential.data.iter().map(|x| -x).collect(),
        };
        Self::from_potential(self.grid, scale(self.harmonic, -1.0), f)
    }

    /// ∫ along any path from lifted `a` to lifted `b`: c·(b − a) − (F(b) − F(a)),
    /// F interpolated. Path independent by construction.
    pub fn line_integral(&self, a: Point, b: Point) -> f64 {
        dot(self.harmonic, sub(b, a)) - (self.potential.interpolate(b) - self.potential.interpolate(a))
    }

    /// Period over a closed class with winding `w`.
    pub fn period(&self, w: Point) -> f64 {
        dot(self.harmonic, w)
    }
}

/// Pointwise covector on a tube, given a point and its nearest curve parameter.
pub trait TubeCovector: Sync {
    fn at(&self, x: Point, t: f64) -> Point;
}

impl<F: Fn(Point, f64) -> Point + Sync> TubeCovector for F {
    fn at(&self, x: Point, t: f64) -> Point {
        self(x, t)
    }
}

/// ω* = s·π*(vol_M)/Vol(M) = (s/L)·|p′(t)|·∇t.
pub struct OmegaStar<'a> {
    pub curve: &'a SubmanifoldCurve,
    pub period: f64,
    pub length: f64,
}

impl TubeCovector for OmegaStar<'_> {
    fn at(&self, x: Point, t: f64) -> Point {
        let c = self.curve.eval(t);
        let grad = TubularData::parameter_gradient(self.curve, x, t);
        scale(grad, self.period / self.length * norm(c.dp))
    }
}

/// A localization of a reference form away from another curve.
pub struct VanishNear<'a> {
    pub curve: &'a SubmanifoldCurve,
    /// Must carry projections out to 1.6 ε.
    pub tube: &'a TubularData,
}

/// Harmonic covector `class`, minus d(χ·x̃) near each listed curve, where x̃
/// is the single-valued potential c·x on that curve's tube.
pub fn reference_form(
    grid: TorusGrid,
    class: Point,
    vanish_near: &[VanishNear<'_>],
    main_tube: Option<&TubularData>,
) -> Result<ClosedForm> {
    let mut f = ScalarField::zeros(grid);
    let c = class.map(quantize);
    for v in vanish_near {
        let chi = CutoffProfile::chi(v.tube.epsilon);
        if chi.support() >= v.tube.reach {
            return invalid(format!(
                "vanishing support {:.4} reaches the curve's reach {:.4}",
                chi.support(),
                v.tube.reach
            ));
        }
        if v.tube.extent < chi.support() {
            return invalid("vanishing tube needs projections out to 1.6ε");
        }
        let period = dot(c, v.curve.winding_vector());
        if period.abs() > 1e-12 {
            return invalid(format!(
                "a form with period {period} on '{}' cannot vanish near it",
                v.curve.name
            ));
        }
        let n = v.curve.samples();
        let mean = (0..n).map(|k| dot(c, v.curve.lifted_sample(k))).sum::<f64>() / n as f64;
        let support = chi.support();
        let contrib: Vec<(usize, f64)> = (0..grid.len())
            .into_par_iter()
            .filter(|&node| v.tube.d[node] < support)
            .map(|node| {
                let x = grid.position(node);
                let t = v.tube.t[node];
                let p = v.curve.eval(t).p;
                let lift = add(p, wrap(sub(x, p), grid.dim()));
                (node, chi.value(v.tube.d[node]) * (dot(c, lift) - mean))
            })
            .collect();
        for (node, val) in contrib {
            if let Some(main) = main_tube {
                if main.d[node] < main.epsilon {
                    return Err(CalibError::TubeOverlap(format!(
                        "vanishing region of '{}' meets the main tube at node {:?}",
                        v.curve.name,
                        &grid.coords(node)[..grid.dim()]
                    )));
                }
            }
            f.data[node] += val;
        }
    }
    if let Some(main) = main_tube {
        // the centered stencil must not see the correction inside the main tube
        for node in 0..grid.len() {
            if main.mask[node] {
                for a in 0..grid.dim() {
                    for s in [-1, 1] {
                        if f.data[grid.shift(node, a, s)] != 0.0 {
                            return Err(CalibError::TubeOverlap(format!(
                                "vanishing correction adjacent to main tube node {:?}",
                                &grid.coords(node)[..grid.dim()]
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(ClosedForm::from_potential(grid, c, f))
}

#[derive(Debug, Clone)]
pub struct Primitive {
    pub psi: ScalarField,
    pub loop_residual: f64,
}

pub const LOOP_CLOSURE_TOL: f64 = 1e-5;

/// ψ with dψ = β on the tube, by integrating β from the curve point of
/// parameter 0 along the curve and then along the straight normal fiber.
/// Zero off the mask.
pub fn primitive_on_tube(
    beta: &dyn TubeCovector,
    curve: &SubmanifoldCurve,
    tube: &TubularData,
) -> Result<Primitive> {
    let n = curve.samples();
    let seg: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
            along_segment(beta, curve, a, b)
        })
        .collect();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for s in &seg {
        cum.push(cum.last().unwrap() + s);
    }
    let loop_residual = cum[n].abs();
    if loop_residual > LOOP_CLOSURE_TOL {
        return Err(CalibError::LoopClosure {
            residual: loop_residual,
            tolerance: LOOP_CLOSURE_TOL,
        });
    }
    let grid = tube.grid;
    let dim = grid.dim();
    let data: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            if !tube.mask[node] {
                return 0.0;
            }
            let t = tube.t[node];
            let k = ((t * n as f64).floor() as usize).min(n - 1);
            let mut val = cum[k] + along_segment(beta, curve, k as f64 / n as f64, t);
            let base = curve.eval(t).p;
            let r = wrap(sub(grid.position(node), base), dim);
            // normal fiber: the nearest parameter stays t along it
            let mut fiber = 0.0;
            for (u, w) in GL5 {
                let s = 0.5 * (u + 1.0);
                let y = add(base, scale(r, s));
                fiber += 0.5 * w * dot(beta.at(y, t), r);
            }
            val += fiber;
            val
        })
        .collect();
    Ok(Primitive {
        psi: ScalarField { grid, data },
        loop_residual,
    })
}

fn along_segment(beta: &dyn TubeCovector, curve: &SubmanifoldCurve, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5.iter()
        .map(|(x, w)| {
            let t = mid + half * x;
            let c = curve.eval(t);
            w * dot(beta.at(c.p, t), c.dp)
        })
        .sum::<f64>()
        * half
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TableDefects {
    /// max |Φ − ω*| over nodes whose stencil lies in d ≤ 3ε/5.
    pub inner: f64,
    /// max |Φ − φ| over nodes whose stencil lies in d ≥ 4ε/5.
    pub outer: f64,
    /// max |Dψ − β| over mask nodes whose stencil stays in d ≤ 4ε/5.
    pub psi_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GluedForm {
    pub form: ClosedForm,
    pub psi: ScalarField,
    /// s = ∮_M φ.
    pub period: f64,
    pub length: f64,
    pub rho: CutoffProfile,
    pub defects: TableDefects,
    pub loop_residual: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GlueOptions {
    /// Replaces the standard ρ(ε) profile (negative controls).
    pub rho_override: Option<CutoffProfile>,
}

/// Φ = ω* + d((1 − ρ)ψ) on the tube and φ outside, assembled as φ − D(ρψ).
pub fn glue_form(
    curve: &SubmanifoldCurve,
    tube: &TubularData,
    phi: &ClosedForm,
    opts: &GlueOptions,
) -> Result<GluedForm> {
    let grid = tube.grid;
    if phi.grid != grid {
        return Err(CalibError::DimensionMismatch("form and tube on different grids".into()));
    }
    for node in 0..grid.len() {
        if tube.mask[node] && phi.potential.data[node] != 0.0 {
            return Err(CalibError::TubeOverlap(
                "reference form is not harmonic on the main tube".into(),
            ));
        }
    }
    let period = curve.orientation * phi.period(curve.winding_vector());
    if !(period > 0.0) {
        return invalid(format!("reference form must pair positively with the curve (period {period})"));
    }
    let length = curve.length();
    let c = phi.harmonic;
    let sign = curve.orientation;
    let omega = OmegaStar {
        curve,
        period: period * sign,
        length,
    };
    let beta = |x: Point, t: f64| sub(c, omega.at(x, t));
    let prim = primitive_on_tube(&beta, curve, tube)?;
    let rho = opts.rho_override.unwrap_or_else(|| CutoffProfile::rho(tube.epsilon));
    let mut f = phi.potential.clone();
    for node in 0..grid.len() {
        if tube.mask[node] {
            f.data[node] += rho.value(tube.d[node]) * prim.psi.data[node];
        }
    }
    let form = ClosedForm::from_potential(grid, c, f);

    let eps = tube.epsilon;
    let d = grid.dim();
    let nodal = form.nodal();
    let phi_nodal = phi.nodal();
    let dpsi = prim.psi.gradient();
    let h = grid.spacing();
    let (inner, outer, psi_residual) = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let dn = tube.d[node];
            let x = grid.position(node);
            let v = nodal.at(node);
            let mut inner = 0.0;
            let mut outer = 0.0;
            let mut res = 0.0;
            let (lo, hi) = stencil_range(grid, &tube.d, node);
            if hi <= 0.6 * eps {
                inner = norm(sub(v, omega.at(x, tube.t[node])));
            }
            if lo >= 0.8 * eps {
                outer = norm(sub(v, phi_nodal.at(node)));
            }
            if tube.mask[node] && dn + h <= 0.8 * eps {
                let b = beta(x, tube.t[node]);
                let mut e = 0.0f64;
                for a in 0..d {
                    e = e.max((dpsi.data[node * d + a] - b[a]).abs());
                }
                res = e;
            }
            (inner, outer, res)
        })
        .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)));
    Ok(GluedForm {
        form,
        psi: prim.psi,
        period,
        length,
        rho,
        defects: TableDefects {
            inner,
            outer,
            psi_residual,
        },
        loop_residual: prim.loop_residual,
    })
}

/// Min and max of `d` over a node and its centered-difference neighbours.
fn stencil_range(grid: TorusGrid, d: &[f64], node: usize) -> (f64, f64) {
    let mut lo = d[node];
    let mut hi = d[node];
    for a in 0..grid.dim() {
        for s in [-1, 1] {
            let v = d[grid.shift(node, a, s)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Nodal ω* on the mask (zero elsewhere).
pub fn omega_star_field(curve: &SubmanifoldCurve, tube: &TubularData, period: f64) -> CovectorField {
    let omega = OmegaStar {
        curve,
        period,
        length: curve.length(),
    };
    CovectorField::from_fn(tube.grid, |node, x| {
        if tube.mask[node] {
            omega.at(x, tube.t[node])
        } else {
            [0.0; 3]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus_forge::tubular::{build_tubular, TubeOptions};

    fn wavy_setup(n: usize) -> (SubmanifoldCurve, TubularData) {
        let c = SubmanifoldCurve::wavy(0.1, 4096).unwrap();
        let tube = build_tubular(&c, TorusGrid::cube(2, n).unwrap(), &TubeOptions::default()).unwrap();
        (c, tube)
    }

    #[test]
    fn harmonic_form_is_constant_and_closed() {
        let g = TorusGrid::cube(2, 16).unwrap();
        let f = ClosedForm::harmonic(g, [1.0, 0.0, 0.0]);
        assert!(f.nodal().data.chunks(2).all(|v| v == [1.0, 0.0]));
        assert_eq!(f.nodal().max_exterior_derivative().0, 0.0);
        assert_eq!(f.line_integral([0.1, 0.3, 0.0], [1.1, 0.7, 0.0]), 1.0);
    }

    #[test]
    fn dyadic_potential_gives_exactly_closed_forms() {
        for n in [96, 100, 256] {
            let g = TorusGrid::cube(2, n).unwrap();
            let tau = 2.0 * std::f64::consts::PI;
            let f = ScalarField::from_fn(g, |_, p| 0.3 * (tau * p[0]).sin() * (tau * p[1]).cos() + 0.1 * (3.0 * tau * p[1]).sin());
            let form = ClosedForm::from_potential(g, [0.7, -0.2, 0.0], f);
            assert_eq!(form.nodal().max_exterior_derivative().0, 0.0, "N = {n}");
        }
    }

    #[test]
    fn primitive_of_zero_and_of_exact_forms() {
        let (c, tube) = wavy_setup(64);
        let zero = |_: Point, _: f64| [0.0; 3];
        let p = primitive_on_tube(&zero, &c, &tube).unwrap();
        assert!(p.psi.data.iter().all(|v| *v == 0.0));

        // β = d f for f = sin(2πx)·y
        let tau = 2.0 * std::f64::consts::PI;
        let lift = |x: Point, t: f64| {
            let b = c.eval(t).p;
            add(b, wrap(sub(x, b), 2))
        };
        let beta = |x: Point, t: f64| {
            let y = lift(x, t);
            [tau * (tau * y[0]).cos() * y[1], (tau * y[0]).sin(), 0.0]
        };
        let prim = primitive_on_tube(&beta, &c, &tube).unwrap();
        let p0 = c.eval(0.0).p;
        let f0 = (tau * p0[0]).sin() * p0[1];
        let g = tube.grid;
        let mut err: f64 = 0.0;
        for node in 0..g.len() {
            if tube.mask[node] {
                let y = lift(g.position(node), tube.t[node]);
                let exact = (tau * y[0]).sin() * y[1] - f0;
                err = err.max((prim.psi.data[node] - exact).abs());
            }
        }
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn nonzero_period_fails_loop_closure() {
        let (c, tube) = wavy_setup(64);
        let dx = |_: Point, _: f64| [1.0, 0.0, 0.0];
        assert!(matches!(
            primitive_on_tube(&dx, &c, &tube),
            Err(CalibError::LoopClosure { .. })
        ));
    }

    #[test]
    fn straight_circle_is_idempotent() {
        let c = SubmanifoldCurve::straight(2, 0, [0.0, 0.5, 0.0], 1024, "s").unwrap();
        let g = TorusGrid::cube(2, 64).unwrap();
        let tube = build_tubular(&c, g, &TubeOptions::default()).unwrap();
        let phi = ClosedForm::harmonic(g, [1.0, 0.0, 0.0]);
        let glued = glue_form(&c, &tube, &phi, &GlueOptions::default()).unwrap();
        assert!(glued.form.nodal().data.chunks(2).all(|v| v == [1.0, 0.0]));
    }

    #[test]
    fn wavy_gluing_matches_the_table() {
        let mut inner = Vec::new();
        let mut residual = Vec::new();
        for n in [128, 256] {
            let (c, tube) = wavy_setup(n);
            let phi = ClosedForm::harmonic(tube.grid, [1.0, 0.0, 0.0]);
            let glued = glue_form(&c, &tube, &phi, &GlueOptions::default()).unwrap();
            assert_eq!(glued.form.nodal().max_exterior_derivative().0, 0.0);
            assert_eq!(glued.defects.outer, 0.0);
            assert!(glued.loop_residual < 1e-12);
            inner.push(glued.defects.inner);
            residual.push(glued.defects.psi_residual);
        }
        assert!(inner[1] <= 0.5 * inner[0], "{inner:?}");
        // second order, still pre-asymptotic at these resolutions
        assert!(residual[1] <= residual[0] / 2.5, "{residual:?}");
    }
}
