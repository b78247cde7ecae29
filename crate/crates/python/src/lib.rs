//! Python bindings: front geometry, policy decisions and the workflow
//! commands.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pex_core::mopt::{binomial, dominates, exact_subset, greedy_subset, hypervolume as hv, MoptError, EXACT_SUBSET_LIMIT};
use pex_core::policy::{decide as decide_arm, PolicyParams};
use pex_core::workflow::{
    cmd_backtest, cmd_launch, cmd_phase1, cmd_phase2, cmd_report, cmd_simulate, CommandOutcome, ExperimentConfig,
    Overrides, RunDir, WorkflowError,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mopt_err(e: MoptError) -> PyErr {
    value_err(e)
}

/// Dominated hypervolume of `points` (larger is better) above `reference`.
#[pyfunction]
fn hypervolume(points: Vec<Vec<f64>>, reference: Vec<f64>) -> PyResult<f64> {
    hv(&points, &reference).map_err(mopt_err)
}

/// Indices of the non-dominated points, in input order.
#[pyfunction]
fn pareto_indices(points: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
    let mut keep = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let mut dominated = false;
        for q in &points {
            if dominates(q, p).map_err(mopt_err)? {
                dominated = true;
                break;
            }
        }
        if !dominated {
            keep.push(i);
        }
    }
    Ok(keep)
}

/// Indices of `k` points maximizing hypervolume: exhaustive when the
/// number of subsets is small, greedy otherwise.
#[pyfunction]
#[pyo3(signature = (points, reference, k, method = "auto"))]
fn select_subset(points: Vec<Vec<f64>>, reference: Vec<f64>, k: usize, method: &str) -> PyResult<Vec<usize>> {
    let exact = match method {
        "auto" => binomial(points.len(), k) <= EXACT_SUBSET_LIMIT,
        "exact" => true,
        "greedy" => false,
        other => return Err(value_err(format!("unknown method {other:?}; use auto, exact or greedy"))),
    };
    let picked = if exact { exact_subset(&points, &reference, k) } else { greedy_subset(&points, &reference, k) };
    picked.map_err(mopt_err)
}

/// Arm (1-based) chosen by the linear-utility policy for one CATE matrix
/// `tau` (n rows, m columns, first row the control's zeros).
#[pyfunction]
fn decide(weights: Vec<f64>, biases: Vec<f64>, tau: Vec<Vec<f64>>) -> PyResult<usize> {
    let n = tau.len();
    let m = tau.first().map_or(0, Vec::len);
    if tau.iter().any(|row| row.len() != m) {
        return Err(value_err("tau rows must have equal length"));
    }
    let tau = DMatrix::from_fn(n, m, |i, j| tau[i][j]);
    decide_arm(&PolicyParams::new(weights, biases), &tau).map_err(value_err)
}

/// The built-in sign-heterogeneous benchmark experiment config as JSON.
#[pyfunction]
fn benchmark_config() -> String {
    ExperimentConfig::benchmark().to_json()
}

/// Runs one workflow command and returns `(status, message)` with
/// status "completed" or "gated". Errors raise `RuntimeError`.
#[pyfunction]
#[pyo3(signature = (command, config, out = PathBuf::from("runs"), seed = None, candidate_index = None, accept = false, retrain = false))]
fn run(
    command: &str,
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    candidate_index: Option<usize>,
    accept: bool,
    retrain: bool,
) -> PyResult<(String, String)> {
    let go = || -> Result<CommandOutcome, WorkflowError> {
        let mut cfg = ExperimentConfig::load(&config)?;
        cfg.apply(&Overrides { seed, k: None, rounds: None });
        let dir = RunDir::open(&out, cfg)?;
        match command {
            "simulate" => cmd_simulate(&dir),
            "phase1" => cmd_phase1(&dir, accept, retrain),
            "phase2" => cmd_phase2(&dir, candidate_index),
            "launch" => cmd_launch(&dir, candidate_index),
            "backtest" => cmd_backtest(&dir),
            "report" => cmd_report(&dir),
            other => Err(WorkflowError::Config(format!("unknown command {other:?}"))),
        }
    };
    match go() {
        Ok(CommandOutcome::Completed(msg)) => Ok(("completed".into(), msg)),
        Ok(CommandOutcome::Gated(msg)) => Ok(("gated".into(), msg)),
        Err(e) => Err(PyRuntimeError::new_err(e.to_string())),
    }
}

#[pymodule]
fn pex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(hypervolume, m)?)?;
    m.add_function(wrap_pyfunction!(pareto_indices, m)?)?;
    m.add_function(wrap_pyfunction!(select_subset, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
