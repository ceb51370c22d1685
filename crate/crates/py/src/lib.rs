//! Python bindings: forms, metrics and comass engines as objects, and the
//! forge / minimize / lemma pipelines as functions returning report dicts.

use calib_core::cli;
use calib_core::comass::{comass_ascent, comass_bruteforce, comass_exact, comass_with, ComassConfig, ComassEstimate};
use calib_core::multilinear::{eval, AltForm, Frame, MetricPoint};
use calib_core::suites::{parse_suites, run_suites};
use calib_core::torus_forge::{forge_multiclass, forge_single, ForgeConfig, ModelKind};
use calib_core::CalibError;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: CalibError) -> PyErr {
    if cli::exit_code(&e) == 1 {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn columns_to_matrix(n: usize, cols: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    if cols.iter().any(|c| c.len() != n) {
        return Err(PyValueError::new_err(format!("every column must have {n} entries")));
    }
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}

/// Constant alternating p-form on Rⁿ; indices are 1-based as in the JSON schema.
#[pyclass(name = "AltForm", module = "calib", frozen)]
struct PyAltForm {
    inner: AltForm,
}

#[pymethods]
impl PyAltForm {
    #[new]
    #[pyo3(signature = (n, p, terms=Vec::new()))]
    fn new(n: usize, p: usize, terms: Vec<(Vec<usize>, f64)>) -> PyResult<Self> {
        let mut zero_based = Vec::with_capacity(terms.len());
        for (idx, c) in terms {
            if idx.contains(&0) {
                return Err(PyValueError::new_err("indices are 1-based"));
            }
            zero_based.push((idx.into_iter().map(|i| i - 1).collect::<Vec<_>>(), c));
        }
        AltForm::from_terms(n, p, &zero_based).map(|inner| Self { inner }).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("forms serialize")
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.ambient_dim()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.degree()
    }

    /// Nonzero terms as (1-based indices, coefficient).
    fn terms(&self) -> Vec<(Vec<usize>, f64)> {
        self.inner
            .terms()
            .map(|(idx, c)| (idx.iter().map(|i| i + 1).collect(), c))
            .collect()
    }

    /// φ(v₁, …, v_p) for the given column vectors.
    fn evaluate(&self, columns: Vec<Vec<f64>>) -> PyResult<f64> {
        let m = columns_to_matrix(self.inner.ambient_dim(), &columns)?;
        let frame = Frame::new(m).map_err(to_py_err)?;
        eval(&self.inner, &frame).map_err(to_py_err)
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.inner.try_add(&other.inner).map(|inner| Self { inner }).map_err(to_py_err)
    }

    fn __mul__(&self, s: f64) -> Self {
        Self { inner: self.inner.scaled(s) }
    }

    fn __rmul__(&self, s: f64) -> Self {
        self.__mul__(s)
    }

    fn __repr__(&self) -> String {
        format!("AltForm({})", self.to_json())
    }
}

/// Positive-definite inner product on Rⁿ.
#[pyclass(name = "Metric", module = "calib", frozen)]
struct PyMetric {
    inner: MetricPoint,
}

#[pymethods]
impl PyMetric {
    #[new]
    fn new(entries: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = entries.len();
        if entries.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("metric entries must form a square matrix"));
        }
        MetricPoint::new(DMatrix::from_fn(n, n, |i, j| entries[i][j]))
            .map(|inner| Self { inner })
            .map_err(to_py_err)
    }

    #[staticmethod]
    fn identity(n: usize) -> Self {
        Self { inner: MetricPoint::identity(n) }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.dim()
    }

    fn entries(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

fn estimate_dict<'py>(py: Python<'py>, e: &ComassEstimate) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("lower", e.lower)?;
    d.set_item("upper", e.upper)?;
    d.set_item("method", json_to_py(py, &e.method)?)?;
    d.set_item("witness", e.witness.columns())?;
    d.set_item("evaluations", e.evaluations)?;
    d.set_item("nonconverged_starts", e.nonconverged_starts)?;
    Ok(d)
}

/// Comass bracket of `form` under `metric` (identity when omitted).
#[pyfunction]
#[pyo3(signature = (form, metric=None, method="auto", starts=32, samples=20_000, seed=0, tol=1e-9))]
#[allow(clippy::too_many_arguments)]
fn comass<'py>(
    py: Python<'py>,
    form: &PyAltForm,
    metric: Option<&PyMetric>,
    method: &str,
    starts: usize,
    samples: usize,
    seed: u64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let phi = form.inner.clone();
    let g = metric.map_or_else(|| MetricPoint::identity(phi.ambient_dim()), |m| m.inner.clone());
    let method = method.to_string();
    let est = py
        .detach(move || match method.as_str() {
            "auto" => comass_with(&phi, &g, &ComassConfig { starts, tol, samples, seed }),
            "exact" => comass_exact(&phi, &g),
            "ascent" => comass_ascent(&phi, &g, starts, tol, seed),
            "bruteforce" => comass_bruteforce(&phi, &g, samples, seed),
            m => Err(CalibError::InvalidArgument(format!("unknown method '{m}'"))),
        })
        .map_err(to_py_err)?;
    estimate_dict(py, &est)
}

fn forge_config(model: &str, resolution: Option<usize>, amplitude: Option<f64>, epsilon_factor: Option<f64>) -> PyResult<ForgeConfig> {
    let kind: ModelKind = model.parse().map_err(to_py_err)?;
    let mut cfg = ForgeConfig::new(kind);
    if let Some(r) = resolution {
        cfg.resolution = r;
    }
    if let Some(a) = amplitude {
        cfg.amplitude = a;
    }
    if let Some(f) = epsilon_factor {
        cfg.epsilon_factor = f;
    }
    Ok(cfg)
}

/// Builds and certifies a calibration pair; returns the certification report.
/// Certification failures are reported in the dict (`pass` is False), not raised.
#[pyfunction]
#[pyo3(signature = (model, resolution=None, amplitude=None, epsilon_factor=None, dump_fields=None))]
fn forge<'py>(
    py: Python<'py>,
    model: &str,
    resolution: Option<usize>,
    amplitude: Option<f64>,
    epsilon_factor: Option<f64>,
    dump_fields: Option<std::path::PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = forge_config(model, resolution, amplitude, epsilon_factor)?;
    let report = py
        .detach(move || -> calib_core::Result<serde_json::Value> {
            if cfg.model == ModelKind::Twocircle3d {
                let f = forge_multiclass(&cfg)?;
                if let Some(p) = &dump_fields {
                    f.dump(p)?;
                }
                Ok(serde_json::to_value(&f.report)?)
            } else {
                let f = forge_single(&cfg)?;
                if let Some(p) = &dump_fields {
                    f.dump(p)?;
                }
                Ok(serde_json::to_value(&f.report)?)
            }
        })
        .map_err(to_py_err)?;
    json_to_py(py, &report)
}

/// Runs the lemma property suites.
#[pyfunction]
#[pyo3(signature = (suite="all", trials=500, seed=0))]
fn lemmas<'py>(py: Python<'py>, suite: &str, trials: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let suites = parse_suites(suite).map_err(to_py_err)?;
    let report = py.detach(move || run_suites(&suites, trials, seed)).map_err(to_py_err)?;
    json_to_py(py, &report)
}

/// Runs the `calib` command line in-process: returns (exit code, stdout, stderr).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(move || {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = cli::run(std::iter::once("calib".to_string()).chain(args), &mut out, &mut err);
        (
            code,
            String::from_utf8_lossy(&out).into_owned(),
            String::from_utf8_lossy(&err).into_owned(),
        )
    })
}

/// Mass-minimization trial on a freshly forged pair; returns the full CLI
/// envelope (`report`, `config`, `pass`, `input_sha256`).
#[pyfunction]
#[pyo3(signature = (model, competitors=200, seed=0, complexity=6, resolution=None))]
fn minimize<'py>(
    py: Python<'py>,
    model: &str,
    competitors: usize,
    seed: u64,
    complexity: usize,
    resolution: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut args = vec![
        "minimize".to_string(),
        "--model".into(),
        model.into(),
        "--competitors".into(),
        competitors.to_string(),
        "--seed".into(),
        seed.to_string(),
        "--complexity".into(),
        complexity.to_string(),
    ];
    if let Some(r) = resolution {
        args.extend(["--resolution".into(), r.to_string()]);
    }
    let (code, out, err) = run_cli(py, args);
    if code == 2 || out.is_empty() {
        return Err(PyValueError::new_err(err.trim().to_string()));
    }
    py.import("json")?.call_method1("loads", (out,))
}

#[pymodule]
fn calib(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAltForm>()?;
    m.add_class::<PyMetric>()?;
    m.add_function(wrap_pyfunction!(comass, m)?)?;
    m.add_function(wrap_pyfunction!(forge, m)?)?;
    m.add_function(wrap_pyfunction!(lemmas, m)?)?;
    m.add_function(wrap_pyfunction!(minimize, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
