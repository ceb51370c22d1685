//! The `calib` command line: argument parsing, config merging and report output.
//!
//! Exit codes: 0 pass, 1 mathematical failure (report still printed), 2 usage or input error.

mod config;

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::ConfigFile;

use crate::comass::{comass_ascent, comass_bruteforce, comass_exact, comass_with, ComassConfig};
use crate::error::{invalid, CalibError, Result};
use crate::io::sidecar_path;
use crate::mass_court::{delta_grid, minimization_trial, pl_mass, CompetitorOptions, PLLoop, TrialOptions};
use crate::multilinear::{AltForm, MetricPoint};
use crate::suites::{parse_suites, run_suites};
use crate::torus_forge::{
    forge_multiclass, forge_single, load_pair, ClosedForm, ForgeConfig, ModelKind, MetricField,
    SubmanifoldCurve,
};

#[derive(Parser, Debug)]
#[command(name = "calib", version, about = "Comass engines, calibration forging and mass trials")]
struct Cli {
    /// Worker threads (default: hardware parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// key=value file presetting any flag; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Comass of a constant form (JSON) under an optional metric.
    Comass(ComassArgs),
    /// Randomized lemma property suites.
    Lemmas(LemmasArgs),
    /// Build and certify a calibration pair on a torus model.
    Forge(ForgeArgs),
    /// Mass-minimization trial against random homologous competitors.
    Minimize(MinimizeArgs),
}

#[derive(Args, Debug)]
struct ComassArgs {
    /// Form JSON file; '-' or absent reads stdin.
    #[arg(long)]
    form: Option<PathBuf>,
    /// Metric JSON file {"n", "entries"}; identity when absent.
    #[arg(long)]
    metric: Option<PathBuf>,
    /// auto, exact, ascent or bruteforce.
    #[arg(long)]
    method: Option<String>,
    /// Random frames drawn by bruteforce.
    #[arg(long)]
    samples: Option<usize>,
    /// Ascent restarts.
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target width of the ascent bracket.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct LemmasArgs {
    /// all, L3.1, L3.2, L3.3, L3.4, L3.15, L3.16, L3.17, L4.1 or L4.2.
    #[arg(long)]
    suite: Option<String>,
    /// Random instances per suite.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// straight2d, wavy2d or twocircle3d.
    #[arg(long)]
    model: Option<String>,
    /// Grid nodes per axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Curve perturbation amplitude.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Tube radius as a fraction of the reach.
    #[arg(long)]
    epsilon_factor: Option<f64>,
    /// Spline samples per curve.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct ForgeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write potential, Φ, distance and metric fields to PATH (+ PATH.json sidecar).
    #[arg(long)]
    dump_fields: Option<PathBuf>,
    /// Recorded in the report; the forge itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Negative control: ρ plateau moved past ε.
    #[arg(long)]
    corrupt_rho: bool,
    /// Negative control: multiply g̃ by this factor outside the tubes.
    #[arg(long)]
    corrupt_metric: Option<f64>,
}

#[derive(Args, Debug)]
struct MinimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of random competitor cycles.
    #[arg(long)]
    competitors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fourier modes per competitor (≥ 3).
    #[arg(long)]
    complexity: Option<usize>,
    /// Coefficient bound of the first competitor mode.
    #[arg(long)]
    competitor_amplitude: Option<f64>,
    /// Read (Φ, g̃) from a forge field dump instead of forging.
    #[arg(long)]
    fields: Option<PathBuf>,
}

struct Outcome {
    command: &'static str,
    config: Value,
    input_hash: String,
    report: Value,
    pass: bool,
    warnings: Vec<String>,
}

/// Runs the CLI on `args` (program name first), writing JSON to `out` and
/// diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = (|| {
        let file = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let threads = match cli.threads {
            Some(t) => Some(t),
            None => file.get::<usize>("threads")?,
        };
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            if t == 0 {
                return invalid("--threads must be positive");
            }
            pool = pool.num_threads(t);
        }
        let pool = pool
            .build()
            .map_err(|e| CalibError::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| match &cli.command {
            Command::Comass(a) => cmd_comass(a, &file),
            Command::Lemmas(a) => cmd_lemmas(a, &file),
            Command::Forge(a) => cmd_forge(a, &file),
            Command::Minimize(a) => cmd_minimize(a, &file),
        })
    })();
    match result {
        Ok(o) => {
            for w in &o.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            let doc = if o.command == "comass" {
                // the estimate itself at top level
                let mut v = o.report;
                v["config"] = o.config;
                v["input_sha256"] = Value::String(o.input_hash);
                v
            } else {
                json!({
                    "command": o.command,
                    "config": o.config,
                    "input_sha256": o.input_hash,
                    "report": o.report,
                    "pass": o.pass,
                })
            };
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
            if !o.pass {
                let _ = writeln!(err, "{}: FAIL{}", o.command, failure_note(o.command, &doc["report"]));
            }
            if o.pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let code = exit_code(&e);
            let _ = writeln!(err, "error: {e}");
            if code == 1 {
                let _ = writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({"error": e.to_string(), "pass": false})).expect("serializable")
                );
            }
            code
        }
    }
}

/// 1 for failures of the mathematics on valid input, 2 for bad input.
pub fn exit_code(e: &CalibError) -> i32 {
    match e {
        CalibError::AscentFailed { .. }
        | CalibError::InadmissibleC { .. }
        | CalibError::AlphaTooSmall { .. }
        | CalibError::Projection { .. }
        | CalibError::LoopClosure { .. }
        | CalibError::Degenerate(_) => 1,
        CalibError::InvalidArgument(_)
        | CalibError::DimensionMismatch(_)
        | CalibError::Unsupported(_)
        | CalibError::TubeOverlap(_)
        | CalibError::NotEmbedded(_)
        | CalibError::Json(_)
        | CalibError::Io(_) => 2,
    }
}

/// First located failure of a report, for the stderr summary.
fn failure_note(command: &str, report: &Value) -> String {
    let fmt = |f: &Value| {
        let mut s = format!(
            " ({} = {} vs {}",
            f["check"].as_str().unwrap_or("?"),
            f["value"],
            f["threshold"]
        );
        if !f["node"].is_null() {
            s += &format!(" at node {} position {}", f["node"], f["position"]);
        }
        s + ")"
    };
    match command {
        "forge" => {
            let list = if report["certification"].is_object() {
                &report["certification"]["failures"]
            } else {
                &report["failures"]
            };
            list.get(0).map(fmt).unwrap_or_default()
        }
        "minimize" => ["lower_bound_violations", "minimality_violations"]
            .iter()
            .find_map(|k| {
                let w = report[k].as_array()?.iter().find(|r| r.get("vertices").is_some())?;
                Some(format!(
                    " ({k}: competitor {} mass {} vs period {}, worst pointwise ratio {} at {})",
                    w["index"], w["mass"], report["period_M"], w["max_pointwise_ratio"], w["max_ratio_at"]
                ))
            })
            .unwrap_or_default(),
        _ => String::new(),
    }
}

fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn pick<T: std::str::FromStr>(flag: Option<T>, file: &ConfigFile, key: &str, default: T) -> Result<T> {
    Ok(match flag {
        Some(v) => v,
        None => file.get(key)?.unwrap_or(default),
    })
}

fn pick_opt<T: std::str::FromStr>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>> {
    Ok(match flag {
        Some(v) => Some(v),
        None => file.get(key)?,
    })
}

const COMMON_KEYS: [&str; 1] = ["threads"];
const MODEL_KEYS: [&str; 5] = ["model", "resolution", "amplitude", "epsilon-factor", "samples"];

fn allowed(extra: &[&'static str], with_model: bool) -> Vec<&'static str> {
    let mut v: Vec<&'static str> = COMMON_KEYS.to_vec();
    if with_model {
        v.extend(MODEL_KEYS);
    }
    v.extend(extra);
    v
}

#[derive(Serialize)]
struct ComassResolved {
    form: String,
    metric: Option<String>,
    method: String,
    samples: usize,
    starts: usize,
    seed: u64,
    tol: f64,
}

fn cmd_comass(a: &ComassArgs, file: &ConfigFile) -> Result<Outcome> {
    file.check_keys(&allowed(&["form", "metric", "method", "samples", "starts", "seed", "tol"], false))?;
    let defaults = ComassConfig::default();
    let form_path = pick_opt(a.form.clone(), file, "form")?;
    let metric_path = pick_opt(a.metric.clone(), file, "metric")?;
    let resolved = ComassResolved {
        form: form_path
            .as_ref()
            .map_or("-".into(), |p| p.display().to_string()),
        metric: metric_path.as_ref().map(|p| p.display().to_string()),
        method: pick(a.method.clone(), file, "method", "auto".into())?,
        samples: pick(a.samples, file, "samples", defaults.samples)?,
        starts: pick(a.starts, file, "starts", defaults.starts)?,
        seed: pick(a.seed, file, "seed", defaults.seed)?,
        tol: pick(a.tol, file, "tol", defaults.tol)?,
    };
    let form_text = match &form_path {
        Some(p) if p.as_os_str() != "-" => std::fs::read_to_string(p)?,
        _ => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let phi: AltForm = serde_json::from_str(&form_text)?;
    let (g, metric_text) = match &metric_path {
        Some(p) => {
            let t = std::fs::read_to_string(p)?;
            (serde_json::from_str::<MetricPoint>(&t)?, t)
        }
        None => (MetricPoint::identity(phi.ambient_dim()), String::new()),
    };
    let est = match resolved.method.as_str() {
        "auto" => comass_with(
            &phi,
            &g,
            &ComassConfig {
                starts: resolved.starts,
                tol: resolved.tol,
                samples: resolved.samples,
                seed: resolved.seed,
            },
        )?,
        "exact" => comass_exact(&phi, &g)?,
        "ascent" => comass_ascent(&phi, &g, resolved.starts, resolved.tol, resolved.seed)?,
        "bruteforce" => comass_bruteforce(&phi, &g, resolved.samples, resolved.seed)?,
        m => return invalid(format!("unknown method '{m}' (auto, exact, ascent, bruteforce)")),
    };
    let config = serde_json::to_value(&resolved)?;
    Ok(Outcome {
        command: "comass",
        input_hash: sha256_hex(&[&serde_json::to_vec(&config)?, form_text.as_bytes(), metric_text.as_bytes()]),
        config,
        report: serde_json::to_value(&est)?,
        pass: true,
        warnings: vec![],
    })
}

fn cmd_lemmas(a: &LemmasArgs, file: &ConfigFile) -> Result<Outcome> {
    file.check_keys(&allowed(&["suite", "trials", "seed"], false))?;
    let suite = pick(a.suite.clone(), file, "suite", "all".into())?;
    let trials = pick(a.trials, file, "trials", 500)?;
    let seed = pick(a.seed, file, "seed", 0)?;
    let suites = parse_suites(&suite)?;
    let report = run_suites(&suites, trials, seed)?;
    let config = json!({"suite": suite, "trials": trials, "seed": seed});
    Ok(Outcome {
        command: "lemmas",
        input_hash: sha256_hex(&[&serde_json::to_vec(&config)?]),
        config,
        pass: report.pass,
        report: serde_json::to_value(&report)?,
        warnings: vec![],
    })
}

fn forge_config(m: &ModelArgs, file: &ConfigFile) -> Result<ForgeConfig> {
    let name: Option<String> = pick_opt(m.model.clone(), file, "model")?;
    let Some(name) = name else {
        return invalid("missing --model (straight2d, wavy2d, twocircle3d)");
    };
    let model: ModelKind = name.parse()?;
    let mut cfg = ForgeConfig::new(model);
    cfg.resolution = pick(m.resolution, file, "resolution", cfg.resolution)?;
    cfg.amplitude = pick(m.amplitude, file, "amplitude", cfg.amplitude)?;
    cfg.epsilon_factor = pick(m.epsilon_factor, file, "epsilon-factor", cfg.epsilon_factor)?;
    cfg.samples = pick(m.samples, file, "samples", cfg.samples)?;
    Ok(cfg)
}

fn cmd_forge(a: &ForgeArgs, file: &ConfigFile) -> Result<Outcome> {
    file.check_keys(&allowed(&["dump-fields", "seed", "corrupt-rho", "corrupt-metric"], true))?;
    let mut cfg = forge_config(&a.model, file)?;
    cfg.corrupt_rho = a.corrupt_rho || file.flag("corrupt-rho")?;
    cfg.corrupt_metric = pick_opt(a.corrupt_metric, file, "corrupt-metric")?;
    let seed: u64 = pick(a.seed, file, "seed", 0)?;
    let dump: Option<PathBuf> = pick_opt(a.dump_fields.clone(), file, "dump-fields")?;
    let (report, pass) = if cfg.model == ModelKind::Twocircle3d {
        let f = forge_multiclass(&cfg)?;
        if let Some(p) = &dump {
            f.dump(p)?;
        }
        (serde_json::to_value(&f.report)?, f.report.pass)
    } else {
        let f = forge_single(&cfg)?;
        if let Some(p) = &dump {
            f.dump(p)?;
        }
        (serde_json::to_value(&f.report)?, f.report.pass)
    };
    let config = json!({
        "forge": cfg,
        "seed": seed,
        "dump_fields": dump.as_ref().map(|p| p.display().to_string()),
    });
    Ok(Outcome {
        command: "forge",
        input_hash: sha256_hex(&[&serde_json::to_vec(&config)?]),
        config,
        report,
        pass,
        warnings: vec![],
    })
}

struct Pair {
    config: ForgeConfig,
    curves: Vec<SubmanifoldCurve>,
    phi: ClosedForm,
    metric: MetricField,
    certification_pass: Option<bool>,
}

fn pair_from_dump(path: &Path) -> Result<Pair> {
    if !path.exists() || !sidecar_path(path).exists() {
        return invalid(format!(
            "forge artifacts missing: {} and its .json sidecar (run `forge --dump-fields`)",
            path.display()
        ));
    }
    let l = load_pair(path)?;
    let phi = l.forms.iter().skip(1).try_fold(l.forms[0].clone(), |acc, f| acc.combine(1.0, f, 1.0))?;
    Ok(Pair {
        config: l.config,
        curves: l.curves,
        phi,
        metric: l.metric,
        certification_pass: None,
    })
}

fn forge_pair(cfg: &ForgeConfig) -> Result<Pair> {
    if cfg.model == ModelKind::Twocircle3d {
        let f = forge_multiclass(cfg)?;
        let phi = f.forms[0].combine(1.0, &f.forms[1], 1.0)?;
        Ok(Pair {
            config: cfg.clone(),
            curves: f.curves.to_vec(),
            phi,
            metric: f.metric,
            certification_pass: Some(f.report.pass),
        })
    } else {
        let f = forge_single(cfg)?;
        Ok(Pair {
            config: cfg.clone(),
            curves: vec![f.curve],
            phi: f.certified,
            metric: f.metric,
            certification_pass: Some(f.report.pass),
        })
    }
}

fn cmd_minimize(a: &MinimizeArgs, file: &ConfigFile) -> Result<Outcome> {
    file.check_keys(&allowed(
        &["competitors", "seed", "complexity", "competitor-amplitude", "fields"],
        true,
    ))?;
    let fields: Option<PathBuf> = pick_opt(a.fields.clone(), file, "fields")?;
    let mut hash_parts: Vec<Vec<u8>> = Vec::new();
    let pair = match &fields {
        Some(p) => {
            let pair = pair_from_dump(p)?;
            if let Some(m) = pick_opt::<String>(a.model.model.clone(), file, "model")? {
                if m.parse::<ModelKind>()? != pair.config.model {
                    return invalid(format!("--model {m} does not match the dump ({})", pair.config.model));
                }
            }
            hash_parts.push(std::fs::read(p)?);
            hash_parts.push(std::fs::read(sidecar_path(p))?);
            pair
        }
        None => forge_pair(&forge_config(&a.model, file)?)?,
    };
    let defaults = TrialOptions::default();
    let n = pair.config.resolution;
    let opts = TrialOptions {
        competitors: pick(a.competitors, file, "competitors", defaults.competitors)?,
        seed: pick(a.seed, file, "seed", 0)?,
        complexity: pick(a.complexity, file, "complexity", defaults.complexity)?,
        delta_grid: delta_grid(n, pair.config.model.default_resolution()),
        pointwise_tolerance: defaults.pointwise_tolerance,
        competitor: CompetitorOptions {
            amplitude: pick(
                a.competitor_amplitude,
                file,
                "competitor-amplitude",
                defaults.competitor.amplitude,
            )?,
            ..defaults.competitor
        },
    };
    let cycle: Vec<PLLoop> = pair.curves.iter().map(PLLoop::from_curve).collect();
    let trial = minimization_trial(&cycle, &pair.phi, &pair.metric, &opts)?;
    let mut warnings = Vec::new();
    if opts.competitors == 0 {
        warnings.push("no competitors: the trial passes vacuously".to_string());
    }
    let mut report = serde_json::to_value(&trial)?;
    let flat_length: f64 = pair.curves.iter().map(|c| c.length()).sum();
    report["flat_length_M"] = json!(flat_length);
    if pair.config.model.dim() == 2 {
        // straight loops in the class of M at 64 heights
        let best = (0..64)
            .map(|k| {
                let l = PLLoop::straight(2, [0.0, k as f64 / 64.0, 0.0], [1, 0, 0], 512)?;
                Ok(pl_mass(&l, &pair.metric))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        report["straight_loop_mass_min"] = json!(best);
    }
    if let Some(c) = pair.certification_pass {
        report["certification_pass"] = json!(c);
    }
    let config = json!({
        "forge": pair.config,
        "fields": fields.as_ref().map(|p| p.display().to_string()),
        "competitors": opts.competitors,
        "seed": opts.seed,
        "complexity": opts.complexity,
        "competitor_amplitude": opts.competitor.amplitude,
        "delta_grid": opts.delta_grid,
    });
    let mut parts: Vec<&[u8]> = Vec::new();
    let cfg_bytes = serde_json::to_vec(&config)?;
    parts.push(&cfg_bytes);
    parts.extend(hash_parts.iter().map(|v| v.as_slice()));
    Ok(Outcome {
        command: "minimize",
        input_hash: sha256_hex(&parts),
        config,
        pass: trial.pass,
        report,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("calib").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["lemmas", "--suite", "L9.9"]).0, 2);
        assert_eq!(call(&["forge"]).0, 2);
        assert_eq!(call(&["minimize", "--fields", "/nonexistent/dump.bin"]).0, 2);
        assert_eq!(call(&["--help"]).0, 0);
    }

    #[test]
    fn comass_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("axis.json");
        std::fs::write(&p, r#"{"n":3,"p":2,"terms":[{"idx":[1,3],"c":1.0}]}"#).unwrap();
        let (code, out, _) = call(&["comass", "--form", p.to_str().unwrap()]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert!((v["lower"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!((v["upper"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(v["method"], "exact");
        assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"n":3,"p":2,"terms":[{"idx":[3,1],"c":1.0}]}"#).unwrap();
        assert_eq!(call(&["comass", "--form", bad.to_str().unwrap()]).0, 2);
    }
}
