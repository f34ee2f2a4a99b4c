//! Python module `qmatmul`: the matrix pipelines, entrywise readout, state preparation,
//! fixture generators and the experiment harness.

use std::collections::BTreeMap;

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qmatmul::harness::{self, ExperimentConfig, Method, ReportTable};
use qmatmul::linalg::{self, DenseMatrix};
use qmatmul::matmul::{self, PipelineConfig, PipelineResult};
use qmatmul::prep::{self, VectorSpec};
use qmatmul::readout;
use qmatmul::sim::{amplitude_distance, CostLedger};
use qmatmul::QmmError;

fn err(e: QmmError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<DenseMatrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("expected a nonempty rectangular list of rows"));
    }
    let n = rows.len();
    DenseMatrix::new(n, cols, rows.into_iter().flatten().collect()).map_err(err)
}

fn from_matrix(m: &DenseMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows()).map(|i| m.row(i)).collect()
}

#[pyclass(name = "CostLedger", module = "qmatmul", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyLedger {
    oracle_calls: u64,
    controlled_oracle_calls: u64,
    amplification_rounds: u64,
    hamiltonian_sim_units: u64,
    classical_entries: u64,
    phase_bits_used: u32,
    postselect_probability: f64,
    models: BTreeMap<String, f64>,
}

impl From<&CostLedger> for PyLedger {
    fn from(l: &CostLedger) -> Self {
        Self {
            oracle_calls: l.oracle_calls,
            controlled_oracle_calls: l.controlled_oracle_calls,
            amplification_rounds: l.amplification_rounds,
            hamiltonian_sim_units: l.hamiltonian_sim_units,
            classical_entries: l.classical_entries,
            phase_bits_used: l.phase_bits_used,
            postselect_probability: l.postselect_probability,
            models: l.models.clone(),
        }
    }
}

#[pymethods]
impl PyLedger {
    fn total_calls(&self) -> u64 {
        self.oracle_calls + self.controlled_oracle_calls
    }

    fn __repr__(&self) -> String {
        format!(
            "CostLedger(oracle_calls={}, controlled_oracle_calls={}, amplification_rounds={}, hamiltonian_sim_units={})",
            self.oracle_calls, self.controlled_oracle_calls, self.amplification_rounds, self.hamiltonian_sim_units
        )
    }
}

/// Output of a state pipeline: the normalized |C̃⟩ over the padded (i, j) grid and the
/// unnormalized estimate of AB.
#[pyclass(name = "MatmulResult", module = "qmatmul", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyMatmulResult {
    method: String,
    amplitudes: Vec<Complex64>,
    target: Vec<Complex64>,
    estimate: Vec<Vec<Complex64>>,
    realized_error: f64,
    predicted_bound: f64,
    success_probability: f64,
    predicted_success: f64,
    phase_bits: u32,
    ledger: PyLedger,
}

#[pymethods]
impl PyMatmulResult {
    fn within_bound(&self) -> bool {
        self.realized_error <= self.predicted_bound
    }

    fn __repr__(&self) -> String {
        format!(
            "MatmulResult(method={}, realized_error={:.3e}, predicted_bound={:.3e}, success_probability={:.4})",
            self.method, self.realized_error, self.predicted_bound, self.success_probability
        )
    }
}

impl From<PipelineResult> for PyMatmulResult {
    fn from(r: PipelineResult) -> Self {
        Self {
            method: r.method.name().to_string(),
            amplitudes: r.state.state.amplitudes().to_vec(),
            target: r.target.amplitudes().to_vec(),
            estimate: from_matrix(&r.unnormalized),
            realized_error: r.realized_error,
            predicted_bound: r.predicted_bound,
            success_probability: r.success_probability(),
            predicted_success: r.predicted_success,
            phase_bits: r.phase_bits,
            ledger: PyLedger::from(&r.ledger),
        }
    }
}

#[pyclass(name = "ReadoutReport", module = "qmatmul", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyReadoutReport {
    method: String,
    c_tilde: Vec<Vec<Complex64>>,
    eps_abs: f64,
    entrywise_error_bound: f64,
    max_observed_error: f64,
    phase_bits: u32,
    ledger: PyLedger,
}

#[pymethods]
impl PyReadoutReport {
    fn within_bound(&self) -> bool {
        self.max_observed_error <= self.entrywise_error_bound
    }
}

#[pyclass(name = "PrepReport", module = "qmatmul", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyPrepReport {
    method: String,
    amplitudes: Vec<Complex64>,
    realized_distance: f64,
    bound: f64,
    success_probability: f64,
    ledger: PyLedger,
}

#[pymethods]
impl PyPrepReport {
    fn within_bound(&self) -> bool {
        self.realized_distance <= self.bound
    }
}

fn pipeline_config(phase_bits: Option<u32>, exact_phase: bool, strict_support: bool) -> PipelineConfig {
    PipelineConfig { phase_bits, exact_phase, strict_support, ..PipelineConfig::default() }
}

/// Prepares |AB⟩ with method swap, lcu, sve or hhl.
#[pyfunction]
#[pyo3(signature = (a, b, method = "swap", eps = 0.05, phase_bits = None, exact_phase = false, strict_support = false))]
#[allow(clippy::too_many_arguments)]
fn multiply(
    py: Python<'_>,
    a: Vec<Vec<Complex64>>,
    b: Vec<Vec<Complex64>>,
    method: &str,
    eps: f64,
    phase_bits: Option<u32>,
    exact_phase: bool,
    strict_support: bool,
) -> PyResult<PyMatmulResult> {
    let (a, b) = (to_matrix(a)?, to_matrix(b)?);
    let cfg = pipeline_config(phase_bits, exact_phase, strict_support);
    let f = match method {
        "swap" => matmul::matmul_swaptest_with,
        "lcu" => matmul::matmul_lcu_with,
        "sve" => matmul::matmul_sve_with,
        "hhl" => matmul::matmul_hhl_with,
        _ => return Err(PyValueError::new_err(format!("unknown pipeline `{method}`"))),
    };
    let r = py.detach(|| f(&a, &b, eps, &cfg)).map_err(err)?;
    Ok(r.into())
}

/// Entries of AB to absolute accuracy `eps_abs` with method swap, sve or hhl.
#[pyfunction]
#[pyo3(signature = (a, b, method = "swap", eps_abs = 0.05, phase_bits = None, strict_support = false))]
fn readout_entries(
    py: Python<'_>,
    a: Vec<Vec<Complex64>>,
    b: Vec<Vec<Complex64>>,
    method: &str,
    eps_abs: f64,
    phase_bits: Option<u32>,
    strict_support: bool,
) -> PyResult<PyReadoutReport> {
    let (a, b) = (to_matrix(a)?, to_matrix(b)?);
    let cfg = pipeline_config(phase_bits, false, strict_support);
    let r = py
        .detach(|| match method {
            "swap" => readout::readout_swaptest(&a, &b, eps_abs),
            "sve" => readout::readout_sve_with(&a, &b, eps_abs, &cfg),
            "hhl" => readout::readout_hhl_with(&a, &b, eps_abs, &cfg),
            _ => Err(QmmError::Parameter(format!("unknown readout method `{method}`"))),
        })
        .map_err(err)?;
    Ok(PyReadoutReport {
        method: format!("readout-{method}"),
        c_tilde: from_matrix(&r.c_tilde),
        eps_abs: r.eps_abs,
        entrywise_error_bound: r.entrywise_error_bound,
        max_observed_error: r.max_observed_error,
        phase_bits: r.phase_bits,
        ledger: PyLedger::from(&r.ledger),
    })
}

/// Amplitude encoding of a real vector with method direct, hamiltonian, sparse,
/// sparse-unknown, dyadic or signshift.
#[pyfunction]
#[pyo3(signature = (x, method = "direct", eps = 0.05))]
fn prepare(x: Vec<f64>, method: &str, eps: f64) -> PyResult<PyPrepReport> {
    let spec = VectorSpec::new(&x).map_err(err)?;
    let report = match method {
        "direct" => {
            let r = prep::synthesize_direct(&spec).map_err(err)?;
            let target = spec.target_state().map_err(err)?;
            return Ok(PyPrepReport {
                method: "prep-direct".into(),
                amplitudes: r.state.amplitudes().to_vec(),
                realized_distance: amplitude_distance(&target, &r.state),
                bound: matmul::EXACT_TOL,
                success_probability: 1.0,
                ledger: PyLedger::from(&r.ledger),
            });
        }
        "hamiltonian" => {
            let d = x.len().next_power_of_two();
            let amp = Complex64::new(1.0 / (x.len() as f64).sqrt(), 0.0);
            let base: Vec<Complex64> = (0..d).map(|k| if k < x.len() { amp } else { Complex64::new(0.0, 0.0) }).collect();
            let base = qmatmul::sim::Statevector::from_vector(prep::DATA_REG, &base).map_err(err)?;
            prep::prep_hamiltonian(&x, &base, eps)
        }
        "sparse" => prep::prep_sparse(&spec, eps, true),
        "sparse-unknown" => prep::prep_sparse(&spec, eps, false),
        "dyadic" => prep::prep_dyadic(&spec, eps),
        "signshift" => prep::prep_signshift(&spec, eps),
        _ => return Err(PyValueError::new_err(format!("unknown preparation method `{method}`"))),
    }
    .map_err(err)?;
    Ok(PyPrepReport {
        method: format!("prep-{method}"),
        amplitudes: report.result.state.amplitudes().to_vec(),
        realized_distance: report.realized_distance,
        bound: report.target_fidelity_bound,
        success_probability: report.result.success_probability,
        ledger: PyLedger::from(&report.result.ledger),
    })
}

#[pyfunction]
fn exact_product(a: Vec<Vec<Complex64>>, b: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    let c = linalg::exact_product(&to_matrix(a)?, &to_matrix(b)?).map_err(err)?;
    Ok(from_matrix(&c))
}

/// n×n real matrix with singular values log-spaced from 1 down to 1/κ.
#[pyfunction]
#[pyo3(signature = (n, kappa, seed = 0))]
fn generate_matrix(n: usize, kappa: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let m = harness::generate_matrix(n, kappa, seed).map_err(err)?;
    Ok((0..m.rows()).map(|i| m.row(i).iter().map(|z| z.re).collect()).collect())
}

#[pyfunction]
#[pyo3(signature = (n, kappa, seed = 0))]
fn generate_vector(n: usize, kappa: f64, seed: u64) -> PyResult<Vec<f64>> {
    harness::generate_vector(n, kappa, seed).map_err(err)
}

/// Runs one generated-fixture experiment per seed and returns the JSON report.
#[pyfunction]
#[pyo3(signature = (method, seeds, eps = 0.05, size = 4, kappa = 2.0, phase_bits = None, exact_phase = false, strict_support = false))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    method: &str,
    seeds: Vec<u64>,
    eps: f64,
    size: usize,
    kappa: f64,
    phase_bits: Option<u32>,
    exact_phase: bool,
    strict_support: bool,
) -> PyResult<String> {
    let method: Method = method.parse().map_err(err)?;
    let cfg = ExperimentConfig { method, eps, phase_bits, exact_phase, strict_support, size, kappa, ..Default::default() };
    let table = py.detach(|| harness::run_batch(&cfg, &seeds)).map_err(err)?;
    table.to_json().map_err(err)
}

/// Re-checks a JSON report; returns (row, descriptor, reason) for every violation.
#[pyfunction]
fn verify_report(py: Python<'_>, report_json: &str) -> PyResult<Vec<(usize, String, String)>> {
    let table = ReportTable::from_json(report_json).map_err(err)?;
    let summary = py.detach(|| harness::verify_bounds(&table)).map_err(err)?;
    Ok(summary.violations.into_iter().map(|v| (v.row, v.descriptor, v.reason)).collect())
}

#[pymodule]
#[pyo3(name = "qmatmul")]
fn qmatmul_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLedger>()?;
    m.add_class::<PyMatmulResult>()?;
    m.add_class::<PyReadoutReport>()?;
    m.add_class::<PyPrepReport>()?;
    m.add_function(wrap_pyfunction!(multiply, m)?)?;
    m.add_function(wrap_pyfunction!(readout_entries, m)?)?;
    m.add_function(wrap_pyfunction!(prepare, m)?)?;
    m.add_function(wrap_pyfunction!(exact_product, m)?)?;
    m.add_function(wrap_pyfunction!(generate_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(generate_vector, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify_report, m)?)?;
    Ok(())
}
