//! Python bindings. Documents cross the boundary as JSON strings in the
//! same formats the command-line tool reads and writes.

use fairsched::eval::{evaluate_with, Method};
use fairsched::io::{instance_to_json, parse_assignment, parse_instance, to_json, RunDocument, SolveDocument};
use fairsched::{generate_instance, mean_value_solve, sequential_solve, Error, GeneratorParams, SolverConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Solver { .. } | Error::Model(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Instance document for a random box instance.
#[pyfunction]
#[pyo3(signature = (seed, n_tasks=20, n_workers=5, delta=5.0, epsilon=0.05))]
fn generate(seed: u64, n_tasks: usize, n_workers: usize, delta: f64, epsilon: f64) -> PyResult<String> {
    let p = GeneratorParams {
        n_tasks,
        n_workers,
        delta,
        epsilon,
        ..Default::default()
    };
    let inst = generate_instance(seed, &p).and_then(|i| i.validated()).map_err(to_py)?;
    Ok(instance_to_json(&inst))
}

/// Solves an instance document; `method` is "dro" or "mean".
#[pyfunction]
#[pyo3(signature = (instance, method="dro", max_iters=40, tol=1e-4))]
fn solve(py: Python<'_>, instance: &str, method: &str, max_iters: usize, tol: f64) -> PyResult<String> {
    let inst = parse_instance(instance).map_err(to_py)?;
    let method = match method {
        "dro" => Method::Dro,
        "mean" => Method::Mean,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let cfg = SolverConfig {
        max_iters,
        tol,
        ..Default::default()
    };
    let run = RunDocument::new(method, cfg.clone());
    let doc = py.detach(|| -> fairsched::error::Result<SolveDocument> {
        let start = std::time::Instant::now();
        let mut doc = match method {
            Method::Dro => {
                let trace = sequential_solve(&inst, &cfg)?;
                let last = trace.last().clone();
                SolveDocument {
                    run,
                    assignment: trace.final_assignment.to_matrix().to_rows(),
                    reward: last.reward,
                    g: last.g,
                    v: last.v,
                    converged: trace.converged,
                    feasible_for_dro: trace.feasible_for_dro,
                    trace: trace.iterations,
                    final_scaling: Some(trace.final_scaling),
                    wall_time_ms: 0.0,
                }
            }
            Method::Mean => {
                let sol = mean_value_solve(&inst, &cfg)?;
                SolveDocument {
                    run,
                    assignment: sol.x.to_matrix().to_rows(),
                    reward: sol.x.reward(&inst.rewards),
                    g: sol.g,
                    v: sol.v,
                    converged: true,
                    feasible_for_dro: false,
                    trace: Vec::new(),
                    final_scaling: None,
                    wall_time_ms: 0.0,
                }
            }
        };
        doc.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(doc)
    });
    Ok(to_json(&doc.map_err(to_py)?))
}

/// Evaluation report for the assignment in a solve document.
#[pyfunction]
#[pyo3(signature = (instance, solution, n_samples=10_000, seed=0))]
fn evaluate(py: Python<'_>, instance: &str, solution: &str, n_samples: usize, seed: u64) -> PyResult<String> {
    let inst = parse_instance(instance).map_err(to_py)?;
    let x = parse_assignment(solution).map_err(to_py)?;
    let report = py.detach(|| evaluate_with(&x, &inst, n_samples, seed, false)).map_err(to_py)?;
    Ok(to_json(&report))
}

#[pymodule]
fn fairsched_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
