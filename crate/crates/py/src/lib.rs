//! Python bindings: assemble sources and run scenarios from Python.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ::localcap::asm::{assemble as asm_assemble, ExpandOptions};
use ::localcap::link::ObjectImage;
use ::localcap::scenarios::{adversaries_for, run_scenario as lib_run, ScenarioName, Variant, DEFAULT_FUEL};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Assemble a source text into object-file text.
#[pyfunction]
#[pyo3(signature = (source, stack_clear = true, reqglob = true, stack_check = true))]
fn assemble(source: &str, stack_clear: bool, reqglob: bool, stack_check: bool) -> PyResult<String> {
    let opts = ExpandOptions { clear_stack_frames: stack_clear, check_global: reqglob, check_stack_perm: stack_check };
    let unit = asm_assemble(source, &opts).map_err(value_err)?;
    Ok(ObjectImage::from_expanded(&unit).to_text())
}

/// Scenario names.
#[pyfunction]
fn scenarios() -> Vec<&'static str> {
    ScenarioName::ALL.iter().map(|s| s.name()).collect()
}

/// Adversary names available for a scenario.
#[pyfunction]
fn adversaries(scenario: &str) -> PyResult<Vec<&'static str>> {
    let s: ScenarioName = scenario.parse().map_err(value_err)?;
    Ok(adversaries_for(s).into_iter().map(|a| a.name).collect())
}

/// Run one scenario; returns `(verdict, steps)`.
#[pyfunction]
#[pyo3(signature = (scenario, adversary, variant = "standard", fuel = DEFAULT_FUEL))]
fn run_scenario(scenario: &str, adversary: &str, variant: &str, fuel: u64) -> PyResult<(String, u64)> {
    let s: ScenarioName = scenario.parse().map_err(value_err)?;
    let v: Variant = variant.parse().map_err(value_err)?;
    let run = lib_run(s, adversary, v, fuel).map_err(value_err)?;
    Ok((run.verdict.to_string(), run.steps))
}

#[pymodule]
fn localcap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(adversaries, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
