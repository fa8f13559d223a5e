use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use zrp_core::experiment::{self, ExperimentPlan};
use zrp_core::{RateFamily, WalkSymbol, ZrpError};

fn to_py(e: ZrpError) -> PyErr {
    match e {
        ZrpError::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn family(a: f64, b: Option<f64>) -> RateFamily {
    match b {
        Some(b) => RateFamily::Affine { a, b },
        None => RateFamily::Linear { a },
    }
}

/// Equilibrium marginal at density `gamma` as a JSON string.
#[pyfunction]
#[pyo3(signature = (gamma, a = 1.0, b = None, tol = 1e-14))]
fn equilibrium(gamma: f64, a: f64, b: Option<f64>, tol: f64) -> PyResult<String> {
    zrp_core::fugacity_of_density(gamma, &family(a, b), tol).and_then(|p| p.to_json()).map_err(to_py)
}

#[pyfunction]
fn stable_density_at_origin(t: f64, d: usize, alpha: f64) -> PyResult<f64> {
    zrp_core::stable_density_at_origin(t, d, alpha).map_err(to_py)
}

/// `p_t(0, x)` of the walk on `Z^d`.
#[pyfunction]
fn transition_probability(d: usize, alpha: f64, t: f64, x: Vec<i64>) -> PyResult<f64> {
    let symbol = WalkSymbol::new(d, alpha).map_err(to_py)?;
    zrp_core::transition_probability(&symbol, t, &x).map_err(to_py)
}

#[pyfunction]
fn normalizer(n: f64, d: usize, alpha: f64) -> PyResult<f64> {
    zrp_core::normalizer(n, d, alpha).map_err(to_py)
}

#[pyfunction]
fn scaling_h(s: f64, alpha: f64) -> PyResult<f64> {
    zrp_core::scaling_h(s, alpha).map_err(to_py)
}

#[pyfunction]
fn fbm_covariance(theta: f64, t: f64, s: f64) -> f64 {
    zrp_core::fbm_covariance(theta, t, s)
}

/// Runs a JSON plan, writes its artifacts under `out` and returns the summary JSON.
#[pyfunction]
fn run(py: Python<'_>, plan: &str, out: PathBuf) -> PyResult<String> {
    let plan = ExperimentPlan::from_json(plan).map_err(to_py)?;
    let bundle = py.detach(|| experiment::execute(&plan, &out)).map_err(to_py)?;
    serde_json::to_string(&bundle.summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Recomputes the checks from `out`; returns `(pass, table)`.
#[pyfunction]
fn verify(py: Python<'_>, plan: &str, out: PathBuf) -> PyResult<(bool, String)> {
    let plan = ExperimentPlan::from_json(plan).map_err(to_py)?;
    let report = py.detach(|| experiment::verify(&plan, &out)).map_err(to_py)?;
    Ok((report.pass, report.table()))
}

#[pymodule]
fn zrp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(stable_density_at_origin, m)?)?;
    m.add_function(wrap_pyfunction!(transition_probability, m)?)?;
    m.add_function(wrap_pyfunction!(normalizer, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_h, m)?)?;
    m.add_function(wrap_pyfunction!(fbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
