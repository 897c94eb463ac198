//! Python bindings. Estimates come back as plain dicts; datasets and
//! nuisance fits stay on the Rust side as opaque handles.

use std::path::PathBuf;

use fusion_bounds::bounds;
use fusion_bounds::compat::{self, CompatConfig, CompatMode};
use fusion_bounds::frontier::{self, FrontierConfig};
use fusion_bounds::io::{self, SubgroupFilter};
use fusion_bounds::nuisance::{self, CrossFitConfig};
use fusion_bounds::simulate::{self, Scenario, SimConfig};
use fusion_bounds::{ColumnMapping, OutcomePolicy, SensitivityPair};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

create_exception!(fusion_bounds_py, FusionBoundsError, PyValueError);

fn to_py(err: fusion_bounds::Error) -> PyErr {
    FusionBoundsError::new_err(format!("[{}] {}", err.code(), err))
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| FusionBoundsError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn parse_mode(mode: &str) -> PyResult<CompatMode> {
    match mode {
        "corrected" | "corrected-left-tail" => Ok(CompatMode::CorrectedLeftTail),
        "paper" | "paper-literal" => Ok(CompatMode::PaperLiteral),
        other => Err(FusionBoundsError::new_err(format!("unknown compat mode {other:?}"))),
    }
}

fn resolve_subgroup(dataset: &fusion_bounds::Dataset, expr: Option<&str>) -> PyResult<Option<Vec<usize>>> {
    expr.map(|e| SubgroupFilter::parse(e).and_then(|f| f.indices(dataset)))
        .transpose()
        .map_err(to_py)
}

#[pyclass(name = "Dataset", module = "fusion_bounds_py")]
struct PyDataset {
    inner: fusion_bounds::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Draws a synthetic dataset. `beta` and `tau` override the scenario.
    #[staticmethod]
    #[pyo3(signature = (scenario = "base", n = 2500, seed = 0, beta = None, tau = None))]
    fn simulate(scenario: &str, n: usize, seed: u64, beta: Option<f64>, tau: Option<f64>) -> PyResult<Self> {
        let mut cfg = Scenario::parse(scenario).map_err(to_py)?.config(n, seed);
        cfg.beta = beta.unwrap_or(cfg.beta);
        cfg.tau = tau.unwrap_or(cfg.tau);
        let data = simulate::simulate_dataset(&cfg).map_err(to_py)?;
        Ok(PyDataset { inner: data.dataset })
    }

    #[staticmethod]
    #[pyo3(signature = (path, s = "s", t = "t", y = "y", covariates = None, shift_outcomes = None))]
    fn read_csv(
        path: PathBuf,
        s: &str,
        t: &str,
        y: &str,
        covariates: Option<Vec<String>>,
        shift_outcomes: Option<f64>,
    ) -> PyResult<Self> {
        let mapping = ColumnMapping { s: s.into(), t: t.into(), y: y.into(), covariates };
        let policy = match shift_outcomes {
            Some(margin) => OutcomePolicy::Shift { margin },
            None => OutcomePolicy::RequirePositive,
        };
        let inner = io::read_dataset(&path, &mapping, policy).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names().to_vec()
    }

    /// Unit counts indexed `[s][t]`.
    fn cell_counts(&self) -> [[usize; 2]; 2] {
        self.inner.cell_counts()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn to_csv(&self) -> PyResult<String> {
        io::dataset_to_csv(&self.inner).map_err(to_py)
    }

    /// Units matching a filter such as `"x1 > 1 && s = 0"`.
    fn subgroup(&self, expr: &str) -> PyResult<Self> {
        let idx = resolve_subgroup(&self.inner, Some(expr))?.unwrap_or_default();
        let inner = self.inner.select(&idx).map_err(to_py)?;
        Ok(PyDataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, covariates={:?})", self.inner.n(), self.inner.covariate_names())
    }
}

#[pyclass(name = "Nuisances", module = "fusion_bounds_py")]
struct PyNuisances {
    inner: fusion_bounds::NuisanceEstimates,
}

#[pymethods]
impl PyNuisances {
    /// Cross-fitted nuisance predictions.
    #[staticmethod]
    #[pyo3(signature = (dataset, k = 2, seed = 0, clip_epsilon = 0.01, known_exp_propensity = None))]
    fn cross_fit(
        py: Python<'_>,
        dataset: &PyDataset,
        k: usize,
        seed: u64,
        clip_epsilon: f64,
        known_exp_propensity: Option<f64>,
    ) -> PyResult<Self> {
        let cfg = CrossFitConfig { k, seed, clip_epsilon, known_exp_propensity, ..CrossFitConfig::default() };
        let data = &dataset.inner;
        let inner = py.detach(|| nuisance::cross_fit(data, &cfg)).map_err(to_py)?;
        Ok(PyNuisances { inner })
    }

    /// Simulates a dataset and returns it with its true nuisance functions.
    #[staticmethod]
    #[pyo3(signature = (n = 2500, seed = 0, beta = 0.4, tau = 5.0, clip_epsilon = 0.01))]
    fn oracle(n: usize, seed: u64, beta: f64, tau: f64, clip_epsilon: f64) -> PyResult<(PyDataset, Self)> {
        let data = simulate::simulate_dataset(&SimConfig { n, beta, tau, seed }).map_err(to_py)?;
        let inner = simulate::oracle_nuisances(&data, clip_epsilon).map_err(to_py)?;
        Ok((PyDataset { inner: data.dataset }, PyNuisances { inner }))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }
}

#[pyfunction]
fn boltzmann_weights(v: f64, w: f64, alpha: f64) -> (f64, f64) {
    bounds::boltzmann_weights(v, w, alpha)
}

/// Bias-corrected lower and upper effect bounds with confidence intervals.
#[pyfunction]
#[pyo3(signature = (dataset, nuisances, rho, gamma, alpha = 10.0, confidence = 0.95, subgroup = None))]
#[allow(clippy::too_many_arguments)]
fn estimate_bounds<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    nuisances: &PyNuisances,
    rho: f64,
    gamma: f64,
    alpha: f64,
    confidence: f64,
    subgroup: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let pair = SensitivityPair::new(rho, gamma, alpha).map_err(to_py)?;
    let idx = resolve_subgroup(&dataset.inner, subgroup)?;
    let est = bounds::bias_corrected_bounds(&dataset.inner, &nuisances.inner, &pair, confidence, idx.as_deref())
        .map_err(to_py)?;
    json_to_py(py, &est)
}

/// Compatibility test for both treatment arms; returns one dict per arm.
#[pyfunction]
#[pyo3(signature = (nuisances, rho, gamma, r = 100, confidence = 0.95, mode = "corrected", seed = 0))]
fn compat_test<'py>(
    py: Python<'py>,
    nuisances: &PyNuisances,
    rho: f64,
    gamma: f64,
    r: usize,
    confidence: f64,
    mode: &str,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let pair = SensitivityPair::new(rho, gamma, 10.0).map_err(to_py)?;
    let cfg = CompatConfig { r, confidence, mode: parse_mode(mode)?, seed };
    let results = compat::compat_both_arms(&nuisances.inner, &pair, &cfg, None).map_err(to_py)?;
    json_to_py(py, &results)
}

/// Region map over the `(rho, gamma)` grid. Fits nuisances unless given.
#[pyfunction]
#[pyo3(signature = (
    dataset, nuisances = None, grid_n = 50, rho_max = 0.2, gamma_max = 0.2, seed = 0,
    alpha = 10.0, k = 2, r_compat = 100, confidence = 0.95, compat_mode = "corrected"
))]
#[allow(clippy::too_many_arguments)]
fn compute_frontier<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    nuisances: Option<&PyNuisances>,
    grid_n: usize,
    rho_max: f64,
    gamma_max: f64,
    seed: u64,
    alpha: f64,
    k: usize,
    r_compat: usize,
    confidence: f64,
    compat_mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = FrontierConfig {
        grid_n,
        rho_max,
        gamma_max,
        seed,
        alpha,
        k,
        r_compat,
        confidence,
        compat_mode: parse_mode(compat_mode)?,
        ..FrontierConfig::default()
    };
    let data = &dataset.inner;
    let fixed = nuisances.map(|n| &n.inner);
    let grid = py
        .detach(|| match fixed {
            Some(n) => frontier::compute_frontier_with_nuisances(data, n, &cfg),
            None => frontier::compute_frontier(data, &cfg, None),
        })
        .map_err(to_py)?;
    let text = grid.to_json().map_err(to_py)?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

#[pymodule]
fn fusion_bounds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FusionBoundsError", m.py().get_type::<FusionBoundsError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNuisances>()?;
    m.add_function(wrap_pyfunction!(boltzmann_weights, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(compat_test, m)?)?;
    m.add_function(wrap_pyfunction!(compute_frontier, m)?)?;
    Ok(())
}
