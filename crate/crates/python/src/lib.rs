use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use branchlab::bnb::{solve as bnb_solve, Limits, SolveOptions};
use branchlab::config::generator;
use branchlab::milp::{generate, instance_to_string, parse_instance, Family};
use branchlab::model::HlGauss;
use branchlab::policy::{BranchingPolicy, RandomPolicy, StrongBranching};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Generate an instance and return it in the text format.
#[pyfunction]
#[pyo3(signature = (family, seed=0, params=None))]
fn generate_instance(family: &str, seed: u64, params: Option<&str>) -> PyResult<String> {
    let family: Family = family.parse().map_err(value_err)?;
    let cfg = generator(family, params, seed).map_err(value_err)?;
    Ok(instance_to_string(&generate(&cfg).map_err(value_err)?))
}

/// Solve an instance given as text with `random` or `sb` branching.
#[pyfunction]
#[pyo3(signature = (instance, policy="sb", seed=0, max_nodes=200_000))]
fn solve<'py>(py: Python<'py>, instance: &str, policy: &str, seed: u64, max_nodes: usize) -> PyResult<Bound<'py, PyDict>> {
    let inst = parse_instance(instance).map_err(value_err)?;
    let mut p: Box<dyn BranchingPolicy + Send> = match policy {
        "random" => Box::new(RandomPolicy::new(seed)),
        "sb" => Box::new(StrongBranching),
        other => return Err(PyValueError::new_err(format!("unknown policy {other:?}"))),
    };
    let opts = SolveOptions {
        limits: Limits {
            max_nodes,
            ..Limits::default()
        },
        record_observations: false,
        ..SolveOptions::default()
    };
    let r = py.detach(|| bnb_solve(&inst, p.as_mut(), &opts)).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("status", r.termination.as_str())?;
    d.set_item("objective", r.objective)?;
    d.set_item("nodes", r.nodes)?;
    d.set_item("steps", r.steps)?;
    d.set_item("seconds", r.seconds)?;
    d.set_item("solution", r.incumbent)?;
    Ok(d)
}

/// Encode a negative value with the default codec and decode it back.
#[pyfunction]
fn hl_gauss_roundtrip(z: f64) -> PyResult<(Vec<f64>, f64)> {
    let codec = HlGauss::default();
    let enc = codec.encode(z).map_err(value_err)?;
    let back = codec.decode(&enc.probs).map_err(value_err)?;
    Ok((enc.probs, back))
}

#[pymodule]
fn branchlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_instance, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(hl_gauss_roundtrip, m)?)?;
    Ok(())
}
