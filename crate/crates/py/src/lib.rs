//! Python bindings. Structured results come back as plain dicts and lists
//! (the same shapes the HTTP service returns).

use dragrank_core::constraints::{ConstraintScheme, SampleRole, TrainingPair};
use dragrank_core::script::{run_script as run_script_core, InteractionScript};
use dragrank_core::{scoring, DragRequest, ErrorKind, SessionConfig, SessionError, TrainerConfig};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn session_err(e: SessionError) -> PyErr {
    match e.kind() {
        ErrorKind::BadRequest => PyValueError::new_err(e.to_string()),
        ErrorKind::NotFound => PyKeyError::new_err(e.to_string()),
        ErrorKind::Conflict | ErrorKind::Internal => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(c: Option<f64>, seed: Option<u64>, perplexity: Option<f64>) -> PyResult<SessionConfig> {
    let mut cfg = SessionConfig::default();
    if let Some(c) = c {
        cfg.trainer.c = c;
    }
    if let Some(seed) = seed {
        cfg.trainer.seed = seed;
        cfg.projection.seed = seed;
    }
    if let Some(p) = perplexity {
        cfg.projection.perplexity = p;
    }
    cfg.trainer
        .validate()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(cfg)
}

/// A rating session over one CSV dataset.
#[pyclass(module = "dragrank")]
struct Session {
    inner: dragrank_core::Session,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (csv_text, *, c=None, seed=None, perplexity=None, id="py"))]
    fn new(csv_text: &str, c: Option<f64>, seed: Option<u64>, perplexity: Option<f64>, id: &str) -> PyResult<Self> {
        let ds = dragrank_core::ingest_str(csv_text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = dragrank_core::Session::new(id, ds, config(c, seed, perplexity)?).map_err(session_err)?;
        Ok(Session { inner })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.dataset().ids()
    }

    #[getter]
    fn indicators(&self) -> Vec<String> {
        self.inner.dataset().schema().names().map(str::to_string).collect()
    }

    fn schemes(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.schemes())
    }

    #[pyo3(signature = (scheme=None))]
    fn ranking(&self, py: Python<'_>, scheme: Option<&str>) -> PyResult<Py<PyAny>> {
        to_py(py, self.inner.ranking(scheme).map_err(session_err)?)
    }

    /// Previews the local, global and type candidates for moving `entity_id` to `to_rank`.
    #[pyo3(signature = (entity_id, to_rank, *, base_scheme=None))]
    fn drag(&mut self, py: Python<'_>, entity_id: String, to_rank: usize, base_scheme: Option<String>) -> PyResult<Py<PyAny>> {
        let req = DragRequest {
            entity_id,
            to_rank,
            from_rank: None,
            base_scheme,
        };
        let preview = self.inner.submit_drag(&req).map_err(session_err)?.clone();
        to_py(py, &preview)
    }

    #[pyo3(signature = (which, label=""))]
    fn save(&mut self, py: Python<'_>, which: &str, label: &str) -> PyResult<Py<PyAny>> {
        let which: ConstraintScheme = which.parse().map_err(PyValueError::new_err)?;
        let scheme = self.inner.save_scheme(which, label).map_err(session_err)?;
        to_py(py, &scheme)
    }

    fn comparison(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.comparison().map_err(session_err)?)
    }

    #[pyo3(signature = (scheme="default"))]
    fn projection(&mut self, py: Python<'_>, scheme: &str) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.projection(scheme).map_err(session_err)?)
    }

    fn audit_log(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.audit_log())
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(n={}, m={}, schemes={})",
            self.inner.dataset().n(),
            self.inner.dataset().m(),
            self.inner.schemes().len()
        )
    }
}

/// Kendall tau-a between two rankings given as id lists.
#[pyfunction]
fn kendall_tau(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    dragrank_core::kendall_tau(&a, &b).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Rating breakpoints for a list of rounded scores.
#[pyfunction]
fn entropy_split(rounded: Vec<u32>) -> Vec<f64> {
    scoring::entropy_split(&rounded)
}

/// Trains a linear Ranking SVM on difference vectors with ±1 labels.
#[pyfunction]
#[pyo3(signature = (diffs, labels, *, c=1.0, tol=1e-6, max_iter=10_000, seed=42))]
fn train(diffs: Vec<Vec<f64>>, labels: Vec<i8>, c: f64, tol: f64, max_iter: usize, seed: u64) -> PyResult<Vec<f64>> {
    if diffs.len() != labels.len() {
        return Err(PyValueError::new_err("diffs and labels differ in length"));
    }
    let pairs: Vec<TrainingPair> = diffs
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (diff, label))| TrainingPair {
            diff,
            label,
            left_id: format!("{i}"),
            right_id: format!("{i}"),
            role: SampleRole::Context,
            mirrored: false,
        })
        .collect();
    let cfg = TrainerConfig { c, tol, max_iter, seed };
    dragrank_core::train(&pairs, &cfg)
        .map(|w| w.w)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Runs an interaction script file and returns the report.
#[pyfunction]
fn run_script(py: Python<'_>, path: std::path::PathBuf) -> PyResult<Py<PyAny>> {
    let script = InteractionScript::load(&path).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = run_script_core(&script, SessionConfig::default()).map_err(|e| {
        if e.is_validation() {
            PyValueError::new_err(e.to_string())
        } else {
            PyRuntimeError::new_err(e.to_string())
        }
    })?;
    to_py(py, &report)
}

#[pymodule]
fn dragrank(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_split, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_script, m)?)?;
    Ok(())
}
