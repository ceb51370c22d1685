//! End-to-end pipelines on the named torus models.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curve::{SubmanifoldCurve, DEFAULT_SAMPLES};
use super::cutoff::{CutoffKind, CutoffProfile};
use super::forms::{glue_form, reference_form, ClosedForm, GlueOptions, GluedForm, TableDefects, VanishNear};
use super::grid::{dual_norm, norm, sub, wrap, MetricField, ScalarField, TorusGrid};
use super::metric::{glue_metric, minimal_alpha, MetricOptions, MetricPiece, ALPHA_SAFETY};
use super::tubular::{build_tubular, TubeOptions, TubularData};
use super::verify::{comass_field, on_curve, verify_pair, CertificationReport, Failure, Range, Thresholds};
use crate::error::{invalid, CalibError, Result};
use crate::io::{read_fields, write_fields};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Straight2d,
    Wavy2d,
    Twocircle3d,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Twocircle3d => 3,
            _ => 2,
        }
    }

    pub fn default_resolution(self) -> usize {
        match self {
            ModelKind::Twocircle3d => 96,
            _ => 256,
        }
    }
}

impl FromStr for ModelKind {
    type Err = CalibError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight2d" => Ok(ModelKind::Straight2d),
            "wavy2d" => Ok(ModelKind::Wavy2d),
            "twocircle3d" => Ok(ModelKind::Twocircle3d),
            other => invalid(format!("unknown model '{other}' (straight2d, wavy2d, twocircle3d)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Straight2d => "straight2d",
            ModelKind::Wavy2d => "wavy2d",
            ModelKind::Twocircle3d => "twocircle3d",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForgeConfig {
    pub model: ModelKind,
    pub resolution: usize,
    pub amplitude: f64,
    pub epsilon_factor: f64,
    pub samples: usize,
    /// ℓ = distance_scale_factor · ε in the (1 + (d/ℓ)²) factor.
    pub distance_scale_factor: f64,
    pub alpha_safety: f64,
    /// Negative control: move the ρ plateau past ε.
    #[serde(default)]
    pub corrupt_rho: bool,
    /// Negative control: multiply g̃ by this factor wherever d > ε.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_metric: Option<f64>,
}

impl ForgeConfig {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            resolution: model.default_resolution(),
            amplitude: 0.1,
            epsilon_factor: 0.8,
            samples: DEFAULT_SAMPLES,
            distance_scale_factor: 0.25,
            alpha_safety: ALPHA_SAFETY,
            corrupt_rho: false,
            corrupt_metric: None,
        }
    }

    pub fn with_resolution(mut self, n: usize) -> Self {
        self.resolution = n;
        self
    }

    /// The curve(s) of the model.
    pub fn curves(&self) -> Result<Vec<SubmanifoldCurve>> {
        Ok(match self.model {
            ModelKind::Straight2d => vec![SubmanifoldCurve::straight(2, 0, [0.0, 0.5, 0.0], self.samples, "M")?],
            ModelKind::Wavy2d => vec![SubmanifoldCurve::wavy(self.amplitude, self.samples)?],
            ModelKind::Twocircle3d => vec![
                SubmanifoldCurve::straight(3, 0, [0.0, 0.25, 0.25], self.samples, "M1")?,
                SubmanifoldCurve::straight(3, 1, [0.25, 0.0, 0.75], self.samples, "M2")?,
            ],
        })
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::cube(self.model.dim(), self.resolution)
    }

    /// Tolerance on node comass excess used by the certifier.
    pub fn comass_tolerance(&self) -> f64 {
        match self.model {
            ModelKind::Twocircle3d => 5e-3,
            _ => 2e-3,
        }
    }

    pub fn corrupted_rho(eps: f64) -> CutoffProfile {
        CutoffProfile::custom(CutoffKind::Rho, 1.05 * eps, 1.25 * eps)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Profiles {
    pub rho: CutoffProfile,
    pub sigma: CutoffProfile,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<CutoffProfile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TubeSummary {
    pub reach: f64,
    pub epsilon: f64,
    pub mask_nodes: usize,
    pub distance_gradient_defect: f64,
}

impl TubeSummary {
    fn of(t: &TubularData) -> Self {
        Self {
            reach: t.reach,
            epsilon: t.epsilon,
            mask_nodes: t.mask_count(),
            distance_gradient_defect: t.distance_gradient_defect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForgeReport {
    pub model: ModelKind,
    pub config: ForgeConfig,
    pub tube: TubeSummary,
    pub alpha: f64,
    pub distance_scale: f64,
    pub profiles: Profiles,
    pub period: f64,
    pub curve_length: f64,
    pub table_defects: TableDefects,
    pub loop_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_control: Option<String>,
    pub certification: CertificationReport,
    pub pass: bool,
}

pub struct SingleForge {
    pub config: ForgeConfig,
    pub curve: SubmanifoldCurve,
    pub tube: TubularData,
    pub reference: ClosedForm,
    pub glued: GluedForm,
    /// The form actually certified (the corrupted one for negative controls).
    pub certified: ClosedForm,
    pub alpha: f64,
    pub metric: MetricField,
    pub report: ForgeReport,
}

pub fn forge_single(cfg: &ForgeConfig) -> Result<SingleForge> {
    if cfg.model == ModelKind::Twocircle3d {
        return invalid("twocircle3d is a two-curve model; use forge_multiclass");
    }
    let grid = cfg.grid()?;
    let curve = cfg.curves()?.remove(0);
    let tube = build_tubular(
        &curve,
        grid,
        &TubeOptions {
            epsilon_factor: cfg.epsilon_factor,
            ..Default::default()
        },
    )?;
    let reference = reference_form(grid, [1.0, 0.0, 0.0], &[], Some(&tube))?;
    let glued = glue_form(&curve, &tube, &reference, &GlueOptions::default())?;
    let alpha = minimal_alpha(&[glued.form.nodal()], 1.0) * cfg.alpha_safety;
    let sigma = CutoffProfile::sigma(tube.epsilon);
    let ell = cfg.distance_scale_factor * tube.epsilon;
    let mut metric = glue_metric(
        &[MetricPiece {
            form: glued.form.nodal(),
            tube: &tube,
            sigma,
        }],
        alpha,
        &MetricOptions {
            distance_scale: ell,
            margin: 1.0,
        },
    )?;
    let mut notes = Vec::new();
    if let Some(f) = cfg.corrupt_metric {
        let k = scale_far_field(&mut metric, &[&tube.d], tube.epsilon, f);
        notes.push(format!("metric multiplied by {f} at {k} nodes with d > ε"));
    }
    let (certified, note) = if cfg.corrupt_rho {
        let bad = glue_form(
            &curve,
            &tube,
            &reference,
            &GlueOptions {
                rho_override: Some(ForgeConfig::corrupted_rho(tube.epsilon)),
            },
        )?;
        (
            bad.form,
            Some("rho plateau moved to [0, 1.05ε], cut off at 1.25ε, psi masked to d < ε; certified against the sound metric".to_string()),
        )
    } else {
        (glued.form.clone(), None)
    };
    let thresholds = Thresholds {
        comass: cfg.comass_tolerance(),
        ..Default::default()
    };
    let certification = verify_pair(certified.nodal(), &metric, &curve, &thresholds);
    let report = ForgeReport {
        model: cfg.model,
        config: cfg.clone(),
        tube: TubeSummary::of(&tube),
        alpha,
        distance_scale: ell,
        profiles: Profiles {
            rho: glued.rho,
            sigma,
            chi: None,
        },
        period: glued.period,
        curve_length: glued.length,
        table_defects: glued.defects,
        loop_residual: glued.loop_residual,
        negative_control: {
            notes.extend(note);
            (!notes.is_empty()).then(|| notes.join("; "))
        },
        pass: certification.pass,
        certification,
    };
    Ok(SingleForge {
        config: cfg.clone(),
        curve,
        tube,
        reference,
        glued,
        certified,
        alpha,
        metric,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CombinationReport {
    pub signs: [i8; 2],
    pub comass_max: f64,
    pub node: Vec<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiReport {
    pub model: ModelKind,
    pub config: ForgeConfig,
    pub tubes: [TubeSummary; 2],
    pub curve_distance: f64,
    pub alpha: f64,
    pub distance_scale: f64,
    pub profiles: Profiles,
    pub d_phi_max: f64,
    pub combinations: Vec<CombinationReport>,
    /// Φᵢ(T)/|T| along Mᵢ.
    pub calibration_on_m: [Range; 2],
    /// −Φᵢ along Mᵢ with reversed orientation.
    pub reversed_on_m: [Range; 2],
    /// Φ₁ + Φ₂ along M₁ and M₂.
    pub sum_on_m: [Range; 2],
    /// Max comass of Φᵢ outside U_ε(Mᵢ).
    pub margin_outside: [f64; 2],
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negative_control: Option<String>,
    pub failures: Vec<Failure>,
    pub pass: bool,
}

pub struct MultiForge {
    pub config: ForgeConfig,
    pub curves: [SubmanifoldCurve; 2],
    pub tubes: [TubularData; 2],
    pub forms: [ClosedForm; 2],
    pub alpha: f64,
    pub metric: MetricField,
    pub report: MultiReport,
}

fn curve_distance(a: &SubmanifoldCurve, b: &SubmanifoldCurve) -> f64 {
    let dim = a.dim();
    let stride_a = a.samples().div_ceil(1024);
    let stride_b = b.samples().div_ceil(1024);
    (0..a.samples())
        .into_par_iter()
        .step_by(stride_a)
        .map(|i| {
            let p = a.lifted_sample(i);
            (0..b.samples())
                .step_by(stride_b)
                .map(|j| norm(wrap(sub(p, b.lifted_sample(j)), dim)))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
}

fn range_over(curve: &SubmanifoldCurve, f: impl Fn(f64) -> f64 + Sync) -> Range {
    let n = curve.samples();
    let vals: Vec<f64> = (0..n).into_par_iter().map(|k| f(k as f64 / n as f64)).collect();
    Range {
        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
        max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn forge_multiclass(cfg: &ForgeConfig) -> Result<MultiForge> {
    if cfg.model != ModelKind::Twocircle3d {
        return invalid("forge_multiclass runs the twocircle3d model");
    }
    if cfg.corrupt_rho {
        return invalid("the corrupted-ρ control is defined for single-curve models");
    }
    let grid = cfg.grid()?;
    let mut cs = cfg.curves()?;
    let m2 = cs.pop().unwrap();
    let m1 = cs.pop().unwrap();
    let dist = curve_distance(&m1, &m2);
    let reach = m1.reach().min(m2.reach());
    let eps = (cfg.epsilon_factor * reach).min(dist / 2.8);
    let chi = CutoffProfile::chi(eps);
    if chi.support() + eps >= dist {
        return Err(CalibError::TubeOverlap(format!(
            "curves {dist:.4} apart cannot host tubes of radius {eps:.4} and vanishing collars {:.4}",
            chi.support()
        )));
    }
    let opts = TubeOptions {
        epsilon_factor: cfg.epsilon_factor,
        epsilon_cap: Some(eps),
        extent: 1.6,
    };
    let t1 = build_tubular(&m1, grid, &opts)?;
    let t2 = build_tubular(&m2, grid, &opts)?;
    let phi1 = reference_form(
        grid,
        [1.0, 0.0, 0.0],
        &[VanishNear { curve: &m2, tube: &t2 }],
        Some(&t1),
    )?;
    let phi2 = reference_form(
        grid,
        [0.0, 1.0, 0.0],
        &[VanishNear { curve: &m1, tube: &t1 }],
        Some(&t2),
    )?;
    let g1 = glue_form(&m1, &t1, &phi1, &GlueOptions::default())?;
    let g2 = glue_form(&m2, &t2, &phi2, &GlueOptions::default())?;
    drop((phi1, phi2));
    let f1 = g1.form;
    let f2 = g2.form;
    let alpha = minimal_alpha(&[f1.nodal(), f2.nodal()], 0.5) * cfg.alpha_safety;
    let sigma = CutoffProfile::sigma(eps);
    let ell = cfg.distance_scale_factor * eps;
    let mut metric = glue_metric(
        &[
            MetricPiece {
                form: f1.nodal(),
                tube: &t1,
                sigma,
            },
            MetricPiece {
                form: f2.nodal(),
                tube: &t2,
                sigma,
            },
        ],
        alpha,
        &MetricOptions {
            distance_scale: ell,
            margin: 0.5,
        },
    )?;
    let negative_control = cfg.corrupt_metric.map(|f| {
        let k = scale_far_field(&mut metric, &[&t1.d, &t2.d], eps, f);
        format!("metric multiplied by {f} at {k} nodes with d > ε from both curves")
    });

    let tol = cfg.comass_tolerance();
    let mut failures = Vec::new();
    let d_phi_max = f1.nodal().max_exterior_derivative().0.max(f2.nodal().max_exterior_derivative().0);
    if d_phi_max > 1e-4 {
        failures.push(Failure {
            check: "d_phi".into(),
            value: d_phi_max,
            threshold: 1e-4,
            node: None,
            position: None,
            parameter: None,
        });
    }
    let signs: [[i8; 2]; 8] = [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]];
    let mut combinations = Vec::new();
    for s in signs {
        let combo = f1.nodal().combine(s[0] as f64, f2.nodal(), s[1] as f64)?;
        let field = comass_field(&combo, &metric);
        let (mx, node) = field
            .iter()
            .enumerate()
            .fold((0.0, 0), |acc, (n, &c)| if c > acc.0 { (c, n) } else { acc });
        let pass = mx <= 1.0 + tol;
        let coords = grid.coords(node)[..3].to_vec();
        if !pass {
            failures.push(Failure {
                check: format!("comass[{:+},{:+}]", s[0], s[1]),
                value: mx,
                threshold: 1.0 + tol,
                node: Some(coords.clone()),
                position: Some(grid.position(node).to_vec()),
                parameter: None,
            });
        }
        combinations.push(CombinationReport {
            signs: s,
            comass_max: mx,
            node: coords,
            pass,
        });
    }
    let sum = f1.nodal().combine(1.0, f2.nodal(), 1.0)?;
    let neg1 = f1.nodal().scaled(-1.0);
    let neg2 = f2.nodal().scaled(-1.0);
    let r1 = m1.reversed();
    let r2 = m2.reversed();
    let calibration_on_m = [
        range_over(&m1, |t| on_curve(f1.nodal(), &metric, &m1, t).1),
        range_over(&m2, |t| on_curve(f2.nodal(), &metric, &m2, t).1),
    ];
    let reversed_on_m = [
        range_over(&r1, |t| on_curve(&neg1, &metric, &r1, t).1),
        range_over(&r2, |t| on_curve(&neg2, &metric, &r2, t).1),
    ];
    let sum_on_m = [
        range_over(&m1, |t| on_curve(&sum, &metric, &m1, t).1),
        range_over(&m2, |t| on_curve(&sum, &metric, &m2, t).1),
    ];
    for (name, r) in [
        ("calibration_on_M1", calibration_on_m[0]),
        ("calibration_on_M2", calibration_on_m[1]),
        ("reversed_on_M1", reversed_on_m[0]),
        ("reversed_on_M2", reversed_on_m[1]),
        ("sum_on_M1", sum_on_m[0]),
        ("sum_on_M2", sum_on_m[1]),
    ] {
        let dev = (r.min - 1.0).abs().max((r.max - 1.0).abs());
        if dev > tol {
            failures.push(Failure {
                check: name.into(),
                value: dev,
                threshold: tol,
                node: None,
                position: None,
                parameter: None,
            });
        }
    }
    let margin = |form: &ClosedForm, tube: &TubularData| -> f64 {
        let nodal = form.nodal();
        (0..grid.len())
            .into_par_iter()
            .filter(|&n| tube.d[n] >= tube.epsilon)
            .map(|n| dual_norm(&metric.at(n), nodal.at(n), 3))
            .reduce(|| 0.0, f64::max)
    };
    let margin_outside = [margin(&f1, &t1), margin(&f2, &t2)];
    for (i, m) in margin_outside.iter().enumerate() {
        if *m > 0.5 + tol {
            failures.push(Failure {
                check: format!("margin_outside_M{}", i + 1),
                value: *m,
                threshold: 0.5 + tol,
                node: None,
                position: None,
                parameter: None,
            });
        }
    }
    let report = MultiReport {
        model: cfg.model,
        config: cfg.clone(),
        tubes: [TubeSummary::of(&t1), TubeSummary::of(&t2)],
        curve_distance: dist,
        alpha,
        distance_scale: ell,
        profiles: Profiles {
            rho: g1.rho,
            sigma,
            chi: Some(chi),
        },
        d_phi_max,
        combinations,
        calibration_on_m,
        reversed_on_m,
        sum_on_m,
        margin_outside,
        tolerance: tol,
        negative_control,
        pass: failures.is_empty(),
        failures,
    };
    Ok(MultiForge {
        config: cfg.clone(),
        curves: [m1, m2],
        tubes: [t1, t2],
        forms: [f1, f2],
        alpha,
        metric,
        report,
    })
}

/// A calibration pair read back from a field dump.
pub struct LoadedPair {
    pub config: ForgeConfig,
    pub curves: Vec<SubmanifoldCurve>,
    pub forms: Vec<ClosedForm>,
    pub metric: MetricField,
    pub meta: serde_json::Value,
}

fn metric_components(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

fn dump_pair(
    path: &Path,
    cfg: &ForgeConfig,
    forms: &[&ClosedForm],
    tubes: &[&TubularData],
    metric: &MetricField,
    alpha: f64,
) -> Result<()> {
    let grid = metric.grid;
    let dim = grid.dim();
    let names: Vec<(String, String, String)> = (0..forms.len())
        .map(|i| {
            let sfx = if forms.len() == 1 { String::new() } else { (i + 1).to_string() };
            (format!("potential{sfx}"), format!("phi{sfx}"), format!("distance{sfx}"))
        })
        .collect();
    let mut fields: Vec<(&str, usize, &[f64])> = Vec::new();
    for (i, f) in forms.iter().enumerate() {
        fields.push((&names[i].0, 1, &f.potential.data));
        fields.push((&names[i].1, dim, &f.nodal().data));
        fields.push((&names[i].2, 1, &tubes[i].d));
    }
    fields.push(("metric", metric_components(dim), &metric.data));
    let harmonic: Vec<Vec<f64>> = forms.iter().map(|f| f.harmonic[..dim].to_vec()).collect();
    let meta = serde_json::json!({
        "config": cfg,
        "harmonic": harmonic,
        "alpha": alpha,
        "epsilon": tubes[0].epsilon,
        "metric_layout": "upper-triangular row-major",
    });
    write_fields(path, grid.resolution(), &fields, meta)
}

impl SingleForge {
    pub fn dump(&self, path: &Path) -> Result<()> {
        dump_pair(path, &self.config, &[&self.certified], &[&self.tube], &self.metric, self.alpha)
    }
}

impl MultiForge {
    pub fn dump(&self, path: &Path) -> Result<()> {
        dump_pair(
            path,
            &self.config,
            &[&self.forms[0], &self.forms[1]],
            &[&self.tubes[0], &self.tubes[1]],
            &self.metric,
            self.alpha,
        )
    }
}

pub fn load_pair(path: &Path) -> Result<LoadedPair> {
    let dump = read_fields(path)?;
    let config: ForgeConfig = serde_json::from_value(dump.meta["config"].clone())?;
    let grid = TorusGrid::new(dump.dims.len(), &dump.dims)?;
    let dim = grid.dim();
    let harmonic: Vec<Vec<f64>> = serde_json::from_value(dump.meta["harmonic"].clone())?;
    let curves = config.curves()?;
    if curves.len() != harmonic.len() || config.model.dim() != dim {
        return invalid(format!("dump at {} does not match model {}", path.display(), config.model));
    }
    let mut forms = Vec::new();
    for (i, c) in harmonic.iter().enumerate() {
        let name = if harmonic.len() == 1 { "potential".to_string() } else { format!("potential{}", i + 1) };
        let mut h = [0.0; 3];
        h[..dim].copy_from_slice(c);
        let pot = ScalarField {
            grid,
            data: dump.get(&name, 1)?.to_vec(),
        };
        forms.push(ClosedForm::from_potential(grid, h, pot));
    }
    let metric = MetricField {
        grid,
        data: dump.get("metric", metric_components(dim))?.to_vec(),
    };
    Ok(LoadedPair {
        config,
        curves,
        forms,
        metric,
        meta: dump.meta,
    })
}

/// Scale the metric by `factor` at nodes farther than `radius` from every curve.
pub fn scale_far_field(metric: &mut MetricField, distances: &[&[f64]], radius: f64, factor: f64) -> usize {
    let comps = metric_components(metric.grid.dim());
    let mut count = 0;
    for (n, m) in metric.data.chunks_mut(comps).enumerate() {
        if distances.iter().all(|d| d[n] > radius) {
            m.iter_mut().for_each(|v| *v *= factor);
            count += 1;
        }
    }
    count
}
