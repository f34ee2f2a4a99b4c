//! Experiment driver: seeded fixtures with controlled condition number, CSV input/output,
//! single runs and batches with bound checks, scaling studies with log-log slope fits, and
//! re-verification of stored reports.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{QmmError, Result};
use crate::linalg::{DenseMatrix, C64};
use crate::matmul::{matmul_hhl_with, matmul_lcu_with, matmul_sve_with, matmul_swaptest_with, PipelineConfig, EXACT_TOL};
use crate::prep::{prep_dyadic, prep_hamiltonian, prep_signshift, prep_sparse, synthesize_direct, VectorSpec, DATA_REG};
use crate::qpe::MAX_PHASE_BITS;
use crate::readout::{readout_hhl_with, readout_sve_with, readout_swaptest};
use crate::sim::{amplitude_distance, CostLedger, Statevector};

pub const SCHEMA_VERSION: u32 = 1;
/// Relative tolerance when comparing stored and recomputed report values.
const VERIFY_TOL: f64 = 1e-9;
const VERIFY_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Swap,
    Sve,
    Hhl,
    Lcu,
    ReadoutSwap,
    ReadoutSve,
    ReadoutHhl,
    PrepDirect,
    PrepHamiltonian,
    PrepSparse,
    PrepSparseUnknown,
    PrepDyadic,
    PrepSignshift,
}

impl Method {
    pub const ALL: [Method; 13] = [
        Method::Swap,
        Method::Sve,
        Method::Hhl,
        Method::Lcu,
        Method::ReadoutSwap,
        Method::ReadoutSve,
        Method::ReadoutHhl,
        Method::PrepDirect,
        Method::PrepHamiltonian,
        Method::PrepSparse,
        Method::PrepSparseUnknown,
        Method::PrepDyadic,
        Method::PrepSignshift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Swap => "swap",
            Method::Sve => "sve",
            Method::Hhl => "hhl",
            Method::Lcu => "lcu",
            Method::ReadoutSwap => "readout-swap",
            Method::ReadoutSve => "readout-sve",
            Method::ReadoutHhl => "readout-hhl",
            Method::PrepDirect => "prep-direct",
            Method::PrepHamiltonian => "prep-hamiltonian",
            Method::PrepSparse => "prep-sparse",
            Method::PrepSparseUnknown => "prep-sparse-unknown",
            Method::PrepDyadic => "prep-dyadic",
            Method::PrepSignshift => "prep-signshift",
        }
    }

    pub fn is_prep(self) -> bool {
        self.name().starts_with("prep-")
    }

    pub fn is_readout(self) -> bool {
        self.name().starts_with("readout-")
    }

    /// Ledger counter that scaling studies fit by default.
    pub fn default_metric(self) -> CostMetric {
        match self {
            Method::PrepHamiltonian | Method::PrepSparse | Method::PrepSparseUnknown => CostMetric::AmplificationRounds,
            _ => CostMetric::TotalCalls,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = QmmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| QmmError::Parameter(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub eps: f64,
    /// Fixed phase register width; derived from `eps` when absent.
    pub phase_bits: Option<u32>,
    pub seed: u64,
    pub strict_support: bool,
    pub exact_phase: bool,
    /// A and B for matrix methods, or a single vector for preparation methods. Empty means
    /// generated fixtures.
    pub inputs: Vec<PathBuf>,
    /// Dimension of generated fixtures.
    pub size: usize,
    /// Condition number of generated fixtures.
    pub kappa: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::Swap,
            eps: 0.05,
            phase_bits: None,
            seed: 0,
            strict_support: false,
            exact_phase: false,
            inputs: Vec::new(),
            size: 4,
            kappa: 2.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(QmmError::Parameter(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if let Some(t) = self.phase_bits {
            if t == 0 || t > MAX_PHASE_BITS {
                return Err(QmmError::Parameter(format!("phase bits must lie in 1..={MAX_PHASE_BITS}, got {t}")));
            }
        }
        if self.size == 0 {
            return Err(QmmError::Parameter("fixture size must be at least 1".into()));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return Err(QmmError::Parameter(format!("kappa must be at least 1, got {}", self.kappa)));
        }
        let expected = if self.method.is_prep() { 1 } else { 2 };
        if !self.inputs.is_empty() && self.inputs.len() != expected {
            return Err(QmmError::Parameter(format!(
                "method {} takes {expected} input file(s), got {}",
                self.method,
                self.inputs.len()
            )));
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            phase_bits: self.phase_bits,
            exact_phase: self.exact_phase,
            strict_support: self.strict_support,
            ..PipelineConfig::default()
        }
    }
}

/// Input data kept in each report row so bounds can be recomputed later.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Instance {
    Matrices { a: DenseMatrix, b: DenseMatrix },
    Vector { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub descriptor: String,
    pub method: Method,
    pub eps: f64,
    pub seed: u64,
    pub phase_bits: u32,
    pub realized_error: f64,
    pub bound: f64,
    pub success_probability: f64,
    pub ledger: CostLedger,
    pub wall_time_ms: f64,
    pub passed: bool,
    pub instance: Option<Instance>,
    /// c̃ for readout methods, the unnormalized product estimate for matrix pipelines, or the
    /// prepared amplitudes as a column.
    #[serde(skip)]
    pub output: Option<DenseMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

/// Flat per-row record for CSV output.
#[derive(Serialize)]
struct CsvRow<'a> {
    descriptor: &'a str,
    method: &'a str,
    eps: f64,
    seed: u64,
    phase_bits: u32,
    realized_error: f64,
    bound: f64,
    success_probability: f64,
    oracle_calls: u64,
    controlled_oracle_calls: u64,
    amplification_rounds: u64,
    hamiltonian_sim_units: u64,
    classical_entries: u64,
    wall_time_ms: f64,
    passed: bool,
}

impl ReportTable {
    pub fn violations(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.violations().next().is_none()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| QmmError::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: ReportTable = serde_json::from_str(text)
            .map_err(|e| QmmError::Parse { line: e.line(), message: e.to_string() })?;
        if table.schema != SCHEMA_VERSION {
            return Err(QmmError::Parameter(format!("unsupported report schema {}", table.schema)));
        }
        Ok(table)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                descriptor: &r.descriptor,
                method: r.method.name(),
                eps: r.eps,
                seed: r.seed,
                phase_bits: r.phase_bits,
                realized_error: r.realized_error,
                bound: r.bound,
                success_probability: r.success_probability,
                oracle_calls: r.ledger.oracle_calls,
                controlled_oracle_calls: r.ledger.controlled_oracle_calls,
                amplification_rounds: r.ledger.amplification_rounds,
                hamiltonian_sim_units: r.ledger.hamiltonian_sim_units,
                classical_entries: r.ledger.classical_entries,
                wall_time_ms: r.wall_time_ms,
                passed: r.passed,
            })
            .map_err(csv_error)?;
        }
        finish_csv(w)
    }
}

fn csv_error(e: csv::Error) -> QmmError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    QmmError::Parse { line, message: e.to_string() }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| QmmError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| QmmError::Io(e.to_string()))
}

/// Worker count from `QMM_WORKERS`, default 1.
pub fn workers() -> usize {
    std::env::var("QMM_WORKERS").ok().and_then(|v| v.parse().ok()).filter(|w| *w > 0).unwrap_or(1)
}

fn run_pool<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Result<Vec<R>> {
    let w = workers();
    if w == 1 {
        return Ok(items.into_iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(w).build().map_err(|e| QmmError::Parameter(e.to_string()))?;
    Ok(pool.install(|| items.into_par_iter().map(f).collect()))
}

// ---------------------------------------------------------------------------------------------
// Fixtures

fn check_fixture(n: usize, kappa: f64) -> Result<()> {
    if n == 0 {
        return Err(QmmError::Parameter("fixture dimension must be at least 1".into()));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(QmmError::Parameter(format!("kappa must be at least 1, got {kappa}")));
    }
    Ok(())
}

/// κ^{−k/(n−1)} for k = 0..n: from 1 down to 1/κ.
fn log_spaced(n: usize, kappa: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n).map(|k| kappa.powf(-(k as f64) / (n - 1) as f64)).collect()
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with R's diagonal made positive.
fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// U·diag(σ)·Vᵀ with σ log-spaced from 1 down to 1/κ, so every σ ≤ 1 and σ_max/σ_min = κ.
pub fn generate_matrix(n: usize, kappa: f64, seed: u64) -> Result<DenseMatrix> {
    check_fixture(n, kappa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthogonal(n, &mut rng);
    let v = random_orthogonal(n, &mut rng);
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(log_spaced(n, kappa)));
    let m = u * s * v.transpose();
    let data: Vec<f64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect();
    DenseMatrix::from_real(n, n, &data)
}

/// The (A, B) fixture pair used by matrix experiments for `seed`.
pub fn generate_pair(n: usize, kappa: f64, seed: u64) -> Result<(DenseMatrix, DenseMatrix)> {
    Ok((generate_matrix(n, kappa, seed.wrapping_mul(2))?, generate_matrix(n, kappa, seed.wrapping_mul(2).wrapping_add(1))?))
}

/// Real vector with log-spaced magnitudes in [1/κ, 1], random signs and order; κ(x) = κ.
pub fn generate_vector(n: usize, kappa: f64, seed: u64) -> Result<Vec<f64>> {
    check_fixture(n, kappa)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = log_spaced(n, kappa).into_iter().map(|m| if rng.gen_bool(0.5) { m } else { -m }).collect();
    v.shuffle(&mut rng);
    Ok(v)
}

// ---------------------------------------------------------------------------------------------
// CSV matrices

fn parse_entry(field: &str, line: usize) -> Result<C64> {
    let f = field.trim();
    if let Ok(x) = f.parse::<f64>() {
        return Ok(C64::new(x, 0.0));
    }
    f.parse::<C64>().map_err(|_| QmmError::Parse { line, message: format!("`{f}` is not a number") })
}

/// Rows of comma-separated entries; `#` starts a comment line. Entries are reals or a+bi.
pub fn parse_matrix_csv(text: &str) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec.iter().map(|f| parse_entry(f, line)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(QmmError::Parse {
                    line,
                    message: format!("expected {} entries, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(QmmError::Parse { line: 1, message: "no matrix rows".into() });
    }
    let (r, c) = (rows.len(), rows[0].len());
    DenseMatrix::new(r, c, rows.into_iter().flatten().collect())
}

pub fn read_matrix_csv(path: &Path) -> Result<DenseMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| QmmError::from(e).context(path.display().to_string()))?;
    parse_matrix_csv(&text).map_err(|e| e.context(path.display().to_string()))
}

/// A single row or single column of real entries.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix_csv(path)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(QmmError::Parameter(format!("{}: expected a single row or column", path.display())));
    }
    if !m.is_real() {
        return Err(QmmError::Parameter(format!("{}: state preparation takes real vectors", path.display())));
    }
    Ok(m.entries().iter().map(|z| z.re).collect())
}

pub fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols())
            .map(|j| {
                let z = m.get(i, j);
                if z.im == 0.0 {
                    format!("{}", z.re)
                } else {
                    format!("{}{:+}i", z.re, z.im)
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

// ---------------------------------------------------------------------------------------------
// Running

struct Evaluation {
    realized: f64,
    bound: f64,
    success: f64,
    phase_bits: u32,
    ledger: CostLedger,
    output: DenseMatrix,
}

fn column_of(s: &Statevector) -> Result<DenseMatrix> {
    DenseMatrix::column(s.amplitudes())
}

fn uniform_base(n: usize) -> Result<Statevector> {
    let d = n.next_power_of_two();
    let a = 1.0 / (n as f64).sqrt();
    let amps = (0..d).map(|k| C64::new(if k < n { a } else { 0.0 }, 0.0)).collect();
    Statevector::new(&[(DATA_REG, d.trailing_zeros() as usize)], amps)
}

fn evaluate(method: Method, instance: &Instance, eps: f64, pcfg: &PipelineConfig) -> Result<Evaluation> {
    match (method, instance) {
        (Method::Swap | Method::Sve | Method::Hhl | Method::Lcu, Instance::Matrices { a, b }) => {
            let r = match method {
                Method::Swap => matmul_swaptest_with(a, b, eps, pcfg)?,
                Method::Sve => matmul_sve_with(a, b, eps, pcfg)?,
                Method::Hhl => matmul_hhl_with(a, b, eps, pcfg)?,
                _ => matmul_lcu_with(a, b, eps, pcfg)?,
            };
            Ok(Evaluation {
                realized: r.realized_error,
                bound: r.predicted_bound,
                success: r.success_probability(),
                phase_bits: r.phase_bits,
                output: r.unnormalized.clone(),
                ledger: r.ledger,
            })
        }
        (Method::ReadoutSwap | Method::ReadoutSve | Method::ReadoutHhl, Instance::Matrices { a, b }) => {
            let r = match method {
                Method::ReadoutSwap => readout_swaptest(a, b, eps)?,
                Method::ReadoutSve => readout_sve_with(a, b, eps, pcfg)?,
                _ => readout_hhl_with(a, b, eps, pcfg)?,
            };
            Ok(Evaluation {
                realized: r.max_observed_error,
                bound: r.entrywise_error_bound,
                success: 1.0,
                phase_bits: r.phase_bits,
                ledger: r.ledger,
                output: r.c_tilde,
            })
        }
        (Method::PrepDirect, Instance::Vector { values }) => {
            let x = VectorSpec::new(values)?;
            let r = synthesize_direct(&x)?;
            let target = x.target_state()?;
            let realized = amplitude_distance(&target, &r.state);
            Ok(Evaluation {
                realized,
                bound: EXACT_TOL,
                success: 1.0,
                phase_bits: 0,
                output: column_of(&r.state)?,
                ledger: r.ledger,
            })
        }
        (_, Instance::Vector { values }) if method.is_prep() => {
            let x = VectorSpec::new(values)?;
            let r = match method {
                Method::PrepHamiltonian => prep_hamiltonian(values, &uniform_base(values.len())?, eps)?,
                Method::PrepSparse => prep_sparse(&x, eps, true)?,
                Method::PrepSparseUnknown => prep_sparse(&x, eps, false)?,
                Method::PrepDyadic => prep_dyadic(&x, eps)?,
                _ => prep_signshift(&x, eps)?,
            };
            Ok(Evaluation {
                realized: r.realized_distance,
                bound: r.target_fidelity_bound,
                success: r.result.success_probability,
                phase_bits: 0,
                output: column_of(&r.result.state)?,
                ledger: r.result.ledger,
            })
        }
        _ => Err(QmmError::Parameter(format!("method {method} does not accept this instance kind"))),
    }
}

fn generated_instance(method: Method, n: usize, kappa: f64, seed: u64) -> Result<Instance> {
    if method.is_prep() {
        Ok(Instance::Vector { values: generate_vector(n, kappa, seed)? })
    } else {
        let (a, b) = generate_pair(n, kappa, seed)?;
        Ok(Instance::Matrices { a, b })
    }
}

fn load_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    if cfg.method.is_prep() {
        Ok(Instance::Vector { values: read_vector_csv(&cfg.inputs[0])? })
    } else {
        Ok(Instance::Matrices { a: read_matrix_csv(&cfg.inputs[0])?, b: read_matrix_csv(&cfg.inputs[1])? })
    }
}

fn run_row(cfg: &ExperimentConfig, seed: u64, descriptor: String, instance: Instance) -> Result<ReportRow> {
    let start = Instant::now();
    let ev = evaluate(cfg.method, &instance, cfg.eps, &cfg.pipeline_config()).map_err(|e| e.context(&descriptor))?;
    Ok(ReportRow {
        passed: ev.realized <= ev.bound,
        descriptor,
        method: cfg.method,
        eps: cfg.eps,
        seed,
        phase_bits: ev.phase_bits,
        realized_error: ev.realized,
        bound: ev.bound,
        success_probability: ev.success,
        ledger: ev.ledger,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        instance: Some(instance),
        output: Some(ev.output),
    })
}

fn generated_descriptor(method: Method, n: usize, kappa: f64, seed: u64) -> String {
    format!("{method} n={n} kappa={kappa} seed={seed}")
}

/// One row: the configured input files, or the generated fixture for `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportTable> {
    cfg.validate()?;
    let row = if cfg.inputs.is_empty() {
        let inst = generated_instance(cfg.method, cfg.size, cfg.kappa, cfg.seed)?;
        run_row(cfg, cfg.seed, generated_descriptor(cfg.method, cfg.size, cfg.kappa, cfg.seed), inst)?
    } else {
        let names: Vec<String> = cfg.inputs.iter().map(|p| p.display().to_string()).collect();
        let inst = load_instance(cfg)?;
        run_row(cfg, cfg.seed, format!("{} {}", cfg.method, names.join(" ")), inst)?
    };
    Ok(ReportTable { schema: SCHEMA_VERSION, config: cfg.clone(), rows: vec![row] })
}

/// One generated-fixture row per seed, in seed order.
pub fn run_batch(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<ReportTable> {
    cfg.validate()?;
    let rows = run_pool(seeds.to_vec(), |seed| {
        let inst = generated_instance(cfg.method, cfg.size, cfg.kappa, seed)?;
        run_row(cfg, seed, generated_descriptor(cfg.method, cfg.size, cfg.kappa, seed), inst)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ReportTable { schema: SCHEMA_VERSION, config: cfg.clone(), rows })
}

// ---------------------------------------------------------------------------------------------
// Verification

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub descriptor: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative comparison with an absolute floor: values at rounding level (exact-mode errors)
/// legitimately move by a few ulps of 1 between runs.
fn differs(stored: f64, recomputed: f64) -> bool {
    (stored - recomputed).abs() > VERIFY_TOL * stored.abs().max(recomputed.abs()) + VERIFY_FLOOR
}

/// Recomputes every row from its stored instance and checks the stored values against it.
pub fn verify_bounds(report: &ReportTable) -> Result<VerifySummary> {
    let pcfg = report.config.pipeline_config();
    let mut violations = Vec::new();
    for (k, row) in report.rows.iter().enumerate() {
        let inst = row.instance.as_ref().ok_or_else(|| {
            QmmError::Parameter(format!("row {k} ({}) carries no instance data", row.descriptor))
        })?;
        let ev = evaluate(row.method, inst, row.eps, &pcfg).map_err(|e| e.context(&row.descriptor))?;
        let mut reasons = Vec::new();
        if row.realized_error > ev.bound {
            reasons.push(format!("realized error {:.6e} exceeds bound {:.6e}", row.realized_error, ev.bound));
        }
        if differs(row.realized_error, ev.realized) {
            reasons.push(format!("stored realized error {:.6e} but recomputed {:.6e}", row.realized_error, ev.realized));
        }
        if differs(row.bound, ev.bound) {
            reasons.push(format!("stored bound {:.6e} but recomputed {:.6e}", row.bound, ev.bound));
        }
        if !reasons.is_empty() {
            violations.push(Violation { row: k, descriptor: row.descriptor.clone(), reason: reasons.join("; ") });
        }
    }
    Ok(VerifySummary { checked: report.rows.len(), violations })
}

pub fn verify_report_file(path: &Path) -> Result<VerifySummary> {
    verify_bounds(&ReportTable::read(path)?)
}

// ---------------------------------------------------------------------------------------------
// Scaling studies

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMetric {
    TotalCalls,
    AmplificationRounds,
    HamiltonianUnits,
}

impl CostMetric {
    pub fn of(self, l: &CostLedger) -> f64 {
        match self {
            CostMetric::TotalCalls => l.total_calls() as f64,
            CostMetric::AmplificationRounds => l.amplification_rounds as f64,
            CostMetric::HamiltonianUnits => l.hamiltonian_sim_units as f64,
        }
    }
}

impl FromStr for CostMetric {
    type Err = QmmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total-calls" => Ok(CostMetric::TotalCalls),
            "amplification-rounds" => Ok(CostMetric::AmplificationRounds),
            "hamiltonian-units" => Ok(CostMetric::HamiltonianUnits),
            _ => Err(QmmError::Parameter(format!("unknown cost metric `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub method: Method,
    pub n_grid: Vec<usize>,
    pub eps_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Defaults to [`Method::default_metric`].
    pub metric: Option<CostMetric>,
    pub phase_bits: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub n: usize,
    pub eps: f64,
    pub kappa: f64,
    pub seed: u64,
    pub cost: f64,
    pub realized_error: f64,
    pub bound: f64,
    pub passed: bool,
}

/// Least-squares fit of log(cost) = slope·log(x) + intercept with a 95% interval on the slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub regressor: String,
    pub slope: f64,
    pub intercept: f64,
    /// Absent with fewer than three points.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub method: Method,
    pub metric: CostMetric,
    pub cells: Vec<ScalingCell>,
    /// Against 1/ε at the first n and κ.
    pub slope_inv_eps: Option<SlopeFit>,
    /// Against n at the first ε and κ.
    pub slope_n: Option<SlopeFit>,
    /// Against κ at the first n and ε; κ^{3/2} for Hamiltonian-based preparation.
    pub slope_kappa: Option<SlopeFit>,
}

impl ScalingStudy {
    pub fn cells_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for c in &self.cells {
            w.serialize(c).map_err(csv_error)?;
        }
        finish_csv(w)
    }
}

pub fn fit_loglog(regressor: &str, xs: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (ci_low, ci_high) = if n > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        let q = StudentsT::new(0.0, 1.0, nf - 2.0).ok()?.inverse_cdf(0.975);
        (Some(slope - q * se), Some(slope + q * se))
    } else {
        (None, None)
    };
    Some(SlopeFit { regressor: regressor.into(), slope, intercept, ci_low, ci_high, points: n })
}

/// Geometric mean of the cost over seeds for each value of `key` among the selected cells.
fn grouped(cells: &[ScalingCell], select: impl Fn(&ScalingCell) -> bool, key: impl Fn(&ScalingCell) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut keys: Vec<f64> = cells.iter().filter(|c| select(c)).map(&key).collect();
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    let ys = keys
        .iter()
        .map(|k| {
            let logs: Vec<f64> =
                cells.iter().filter(|c| select(c) && key(c) == *k && c.cost > 0.0).map(|c| c.cost.ln()).collect();
            if logs.is_empty() {
                0.0
            } else {
                (logs.iter().sum::<f64>() / logs.len() as f64).exp()
            }
        })
        .collect();
    (keys, ys)
}

pub fn scaling_study(spec: &ScalingSpec) -> Result<ScalingStudy> {
    if spec.n_grid.is_empty() || spec.eps_grid.is_empty() || spec.kappa_grid.is_empty() || spec.seeds.is_empty() {
        return Err(QmmError::Parameter("scaling grids must be nonempty".into()));
    }
    let metric = spec.metric.unwrap_or_else(|| spec.method.default_metric());
    let mut grid = Vec::new();
    for &n in &spec.n_grid {
        for &eps in &spec.eps_grid {
            for &kappa in &spec.kappa_grid {
                for &seed in &spec.seeds {
                    grid.push((n, eps, kappa, seed));
                }
            }
        }
    }
    let cells = run_pool(grid, |(n, eps, kappa, seed)| -> Result<ScalingCell> {
        let cfg = ExperimentConfig {
            method: spec.method,
            eps,
            phase_bits: spec.phase_bits,
            seed,
            size: n,
            kappa,
            ..ExperimentConfig::default()
        };
        cfg.validate()?;
        let inst = generated_instance(spec.method, n, kappa, seed)?;
        let row = run_row(&cfg, seed, generated_descriptor(spec.method, n, kappa, seed), inst)?;
        Ok(ScalingCell {
            n,
            eps,
            kappa,
            seed,
            cost: metric.of(&row.ledger),
            realized_error: row.realized_error,
            bound: row.bound,
            passed: row.passed,
        })
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let (n0, e0, k0) = (spec.n_grid[0], spec.eps_grid[0], spec.kappa_grid[0]);
    let (xe, ye) = grouped(&cells, |c| c.n == n0 && c.kappa == k0, |c| 1.0 / c.eps);
    let (xn, yn) = grouped(&cells, |c| c.eps == e0 && c.kappa == k0, |c| c.n as f64);
    let (xk, yk) = grouped(&cells, |c| c.n == n0 && c.eps == e0, |c| c.kappa);
    let hamiltonian = matches!(spec.method, Method::PrepHamiltonian | Method::PrepSparse | Method::PrepSparseUnknown);
    let slope_kappa = if hamiltonian {
        let x: Vec<f64> = xk.iter().map(|k| k.powf(1.5)).collect();
        fit_loglog("kappa^1.5", &x, &yk)
    } else {
        fit_loglog("kappa", &xk, &yk)
    };
    Ok(ScalingStudy {
        method: spec.method,
        metric,
        slope_inv_eps: fit_loglog("1/eps", &xe, &ye),
        slope_n: fit_loglog("n", &xn, &yn),
        slope_kappa,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::compute_svd;

    fn sigmas(m: &DenseMatrix) -> Vec<f64> {
        compute_svd(m).unwrap().sigmas
    }

    #[test]
    fn fixtures_have_the_requested_condition_number() {
        let s = sigmas(&generate_matrix(4, 1.0, 3).unwrap());
        assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-12));

        let s = sigmas(&generate_matrix(4, 10.0, 71).unwrap());
        let (hi, lo) = (s.iter().copied().fold(0.0, f64::max), s.iter().copied().fold(f64::INFINITY, f64::min));
        assert!((hi / lo / 10.0 - 1.0).abs() < 0.01);
        assert!((hi - 1.0).abs() < 1e-12);

        assert_eq!(generate_matrix(5, 3.0, 9).unwrap(), generate_matrix(5, 3.0, 9).unwrap());
        assert_ne!(generate_matrix(5, 3.0, 9).unwrap(), generate_matrix(5, 3.0, 10).unwrap());
        let (a, b) = generate_pair(3, 2.0, 4).unwrap();
        assert_eq!(a, generate_matrix(3, 2.0, 8).unwrap());
        assert_eq!(b, generate_matrix(3, 2.0, 9).unwrap());
    }

    #[test]
    fn vector_fixture_range() {
        let v = generate_vector(16, 64.0, 2).unwrap();
        let m: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let (hi, lo) = (m.iter().copied().fold(0.0, f64::max), m.iter().copied().fold(f64::INFINITY, f64::min));
        assert!((hi - 1.0).abs() < 1e-12 && (hi / lo - 64.0).abs() < 1e-9);
        assert!(v.iter().any(|x| *x < 0.0));
        assert!(generate_vector(0, 2.0, 0).is_err());
        assert!(generate_vector(4, 0.5, 0).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let m = parse_matrix_csv("# comment\n1, 2\n-0.5, 1+2i\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        assert_eq!(m.get(1, 1), C64::new(1.0, 2.0));
        assert_eq!(parse_matrix_csv(&matrix_to_csv(&m)).unwrap(), m);

        match parse_matrix_csv("1,2\n3,4\n5,x\n") {
            Err(QmmError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a parse error, got {other:?}"),
        }
        assert!(matches!(parse_matrix_csv("1,2\n3\n"), Err(QmmError::Parse { line: 2, .. })));
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Swap, Method::ReadoutHhl, Method::PrepSparseUnknown, Method::PrepSignshift] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn verify_catches_tampering() {
        let cfg = ExperimentConfig { method: Method::Sve, ..ExperimentConfig::default() };
        let mut table = run_batch(&cfg, &[1, 2]).unwrap();
        assert!(table.all_passed());
        assert!(verify_bounds(&table).unwrap().passed());

        let back = ReportTable::from_json(&table.to_json().unwrap()).unwrap();
        assert!(verify_bounds(&back).unwrap().passed());

        table.rows[1].realized_error = 0.9;
        let s = verify_bounds(&table).unwrap();
        assert_eq!(s.checked, 2);
        assert_eq!(s.violations.len(), 1);
        assert_eq!(s.violations[0].row, 1);

        let mut wrong_schema: serde_json::Value = serde_json::from_str(&back.to_json().unwrap()).unwrap();
        wrong_schema["schema"] = serde_json::json!(99);
        assert!(ReportTable::from_json(&wrong_schema.to_string()).is_err());
    }

    #[test]
    fn loglog_fit_matches_closed_form() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let exact: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let f = fit_loglog("x", &xs, &exact).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);

        let noise = [0.1, -0.05, 0.0, 0.08, -0.12];
        let ys: Vec<f64> = xs.iter().zip(noise).map(|(x, e)| x * x * f64::exp(e)).collect();
        let f = fit_loglog("x", &xs, &ys).unwrap();
        let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        let (mx, my) = (lx.iter().sum::<f64>() / 5.0, ly.iter().sum::<f64>() / 5.0);
        let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
        let b: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
        let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - my - b * (x - mx)).powi(2)).sum();
        // t_{0.975} with 3 degrees of freedom.
        let half = 3.182446305284263 * (rss / 3.0 / sxx).sqrt();
        assert!((f.slope - b).abs() < 1e-12);
        assert!((f.ci_high.unwrap() - (b + half)).abs() < 1e-9);
        assert!((f.ci_low.unwrap() - (b - half)).abs() < 1e-9);

        assert!(fit_loglog("x", &[1.0], &[1.0]).is_none());
        assert!(fit_loglog("x", &[2.0, 2.0], &[1.0, 3.0]).is_none());
        assert!(fit_loglog("x", &[1.0, 2.0], &[1.0, 2.0]).unwrap().ci_low.is_none());
    }

    #[test]
    fn config_validation() {
        let bad = ExperimentConfig { eps: 0.0, ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig { size: 0, ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
