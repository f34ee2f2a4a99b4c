//! Entrywise classical readout of C = AB to absolute accuracy: one inner-product estimate per
//! entry from the swap test, or a Hadamard-test overlap against the spectral-pipeline output.
//!
//! For the spectral paths the budget ε₃ = eps/2 is split between the process (σ̃ accuracy ε₁)
//! and the overlap estimate (ε₂), so that ‖B_j‖·max σ·ε₂ = ε₃ and ε₁‖B_j‖Σ_k|α_jk⟨i|u_k⟩| ≤ ε₃.

use serde::{Deserialize, Serialize};

use crate::error::{QmmError, Result};
use crate::linalg::{compute_svd, exact_product, inner, norm, DenseMatrix, C64, ZERO};
use crate::matmul::{check_support, hhl_run, sve_run, PipelineConfig};
use crate::qpe::PhaseConfig;
use crate::sim::CostLedger;
use crate::swap_test::{inner_product_estimate, overlap_estimate, StatePreparer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReadoutMethod {
    Swap,
    Sve,
    Hhl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutReport {
    pub method: ReadoutMethod,
    pub eps_abs: f64,
    pub c_tilde: DenseMatrix,
    /// Absolute per-entry guarantee; equals `eps_abs`.
    pub entrywise_error_bound: f64,
    pub max_observed_error: f64,
    /// Largest phase register used by any estimate.
    pub phase_bits: u32,
    pub ledger: CostLedger,
}

impl ReadoutReport {
    pub fn within_bound(&self) -> bool {
        self.max_observed_error <= self.entrywise_error_bound
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalInner {
    pub value: C64,
    /// Accuracy asked of the normalized estimate: eps_abs/(‖x‖‖y‖), capped at 1.
    pub internal_accuracy: f64,
    pub phase_bits: u32,
    pub ledger: CostLedger,
}

fn check_eps(eps_abs: f64) -> Result<()> {
    if !(eps_abs > 0.0 && eps_abs.is_finite()) {
        return Err(QmmError::Parameter(format!("eps_abs must be positive, got {eps_abs}")));
    }
    Ok(())
}

/// x·y = Σ x_k y_k to within `eps_abs`, as ‖x‖‖y‖ times an estimate of ⟨x̄|y⟩.
/// Complex inputs spend one estimate per part at eps_abs/√2 each.
pub fn inner_product_classical(x: &[C64], y: &[C64], eps_abs: f64) -> Result<ClassicalInner> {
    check_eps(eps_abs)?;
    if x.len() != y.len() {
        return Err(QmmError::Dimension(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Ok(ClassicalInner { value: ZERO, internal_accuracy: 1.0, phase_bits: 0, ledger: CostLedger::default() });
    }
    let real = x.iter().chain(y).all(|z| z.im == 0.0);
    let parts = if real { 1.0 } else { std::f64::consts::SQRT_2 };
    let internal = (eps_abs / (nx * ny * parts)).min(1.0);
    let conj_x: Vec<C64> = x.iter().map(|z| z.conj()).collect();
    let px = StatePreparer::from_amplitudes(&conj_x)?;
    let py = StatePreparer::from_amplitudes(y)?;
    let re = inner_product_estimate(&px, &py, internal)?;
    let mut ledger = re.ledger;
    let mut value = C64::new(re.value, 0.0);
    if !real {
        // Im⟨x̄|y⟩ = −Re⟨x̄|iy⟩.
        let im = inner_product_estimate(&px, &py.phased(C64::new(0.0, 1.0)), internal)?;
        ledger.absorb(&im.ledger);
        value.im = -im.value;
    }
    Ok(ClassicalInner { value: value * (nx * ny), internal_accuracy: internal, phase_bits: re.phase_bits, ledger })
}

fn check_conformable(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(QmmError::Dimension(format!("A is {}×{} but B is {}×{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    Ok(())
}

fn finish(
    method: ReadoutMethod,
    a: &DenseMatrix,
    b: &DenseMatrix,
    eps_abs: f64,
    c_tilde: DenseMatrix,
    phase_bits: u32,
    mut ledger: CostLedger,
) -> Result<ReadoutReport> {
    let c = exact_product(a, b)?;
    ledger.classical_entries = (a.rows() * a.cols() + b.rows() * b.cols()) as u64;
    ledger.note_phase_bits(phase_bits);
    Ok(ReadoutReport {
        method,
        eps_abs,
        max_observed_error: c_tilde.max_abs_diff(&c),
        c_tilde,
        entrywise_error_bound: eps_abs,
        phase_bits,
        ledger,
    })
}

/// c̃_ij from one swap-test inner product per entry. Costs Σ_ij ‖A_i‖‖B_j‖/eps_abs units.
pub fn readout_swaptest(a: &DenseMatrix, b: &DenseMatrix, eps_abs: f64) -> Result<ReadoutReport> {
    check_eps(eps_abs)?;
    check_conformable(a, b)?;
    let mut c_tilde = DenseMatrix::zeros(a.rows(), b.cols());
    let mut ledger = CostLedger::default();
    let mut bits = 0;
    let cols: Vec<Vec<C64>> = (0..b.cols()).map(|j| b.col(j)).collect();
    for i in 0..a.rows() {
        let row = a.row(i);
        for (j, col) in cols.iter().enumerate() {
            let est = inner_product_classical(&row, col, eps_abs)?;
            c_tilde.set(i, j, est.value);
            bits = bits.max(est.phase_bits);
            ledger.absorb(&est.ledger);
        }
    }
    let norm_sum: f64 = a.row_norms().iter().sum::<f64>() * b.col_norms().iter().sum::<f64>();
    ledger.record_model("readout_swap_model", norm_sum / eps_abs);
    finish(ReadoutMethod::Swap, a, b, eps_abs, c_tilde, bits, ledger)
}

pub fn readout_sve(a: &DenseMatrix, b: &DenseMatrix, eps_abs: f64) -> Result<ReadoutReport> {
    readout_sve_with(a, b, eps_abs, &PipelineConfig::default())
}

pub fn readout_sve_with(a: &DenseMatrix, b: &DenseMatrix, eps_abs: f64, cfg: &PipelineConfig) -> Result<ReadoutReport> {
    readout_spectral(ReadoutMethod::Sve, a, b, eps_abs, cfg)
}

pub fn readout_hhl(a: &DenseMatrix, b: &DenseMatrix, eps_abs: f64) -> Result<ReadoutReport> {
    readout_hhl_with(a, b, eps_abs, &PipelineConfig::default())
}

pub fn readout_hhl_with(a: &DenseMatrix, b: &DenseMatrix, eps_abs: f64, cfg: &PipelineConfig) -> Result<ReadoutReport> {
    readout_spectral(ReadoutMethod::Hhl, a, b, eps_abs, cfg)
}

/// Hadamard-test readout against the spectral pipeline: the surviving branch of column j has
/// amplitude L_ij ≈ (AB_j)_i/(‖B_j‖ max σ) on |i, 0⟩, so c̃_ij = L̃_ij‖B_j‖ max σ.
///
/// Columns are independent under the circuit, so one simulated run over all of B yields every
/// column's branch; the ledger still charges each entry its own process repetitions.
fn readout_spectral(
    method: ReadoutMethod,
    a: &DenseMatrix,
    b: &DenseMatrix,
    eps_abs: f64,
    cfg: &PipelineConfig,
) -> Result<ReadoutReport> {
    check_eps(eps_abs)?;
    check_conformable(a, b)?;
    let mut c_tilde = DenseMatrix::zeros(a.rows(), b.cols());
    let a_f = a.frobenius();
    if a_f == 0.0 || b.frobenius() == 0.0 {
        return finish(method, a, b, eps_abs, c_tilde, 0, CostLedger::default());
    }
    let svd = compute_svd(a)?;
    check_support(&svd, b, cfg.strict_support)?;
    let smax = svd.sigma_max();
    let col_norms = b.col_norms();
    let eps3 = eps_abs / 2.0;
    let real = a.is_real() && b.is_real();
    let parts = if real { 1.0 } else { std::f64::consts::SQRT_2 };

    // ε₁ per column from the Σ_k|α_jk⟨i|u_k⟩| weight; the run uses the tightest column.
    let mut eps1 = f64::INFINITY;
    for (j, nb) in col_norms.iter().enumerate() {
        if *nb == 0.0 {
            continue;
        }
        let col = b.col(j);
        let alphas: Vec<C64> = svd.right.iter().map(|v| inner(v, &col) / *nb).collect();
        let weight = (0..a.rows())
            .map(|i| alphas.iter().zip(&svd.left).map(|(al, u)| (al * u[i]).norm()).sum::<f64>())
            .fold(0.0, f64::max);
        eps1 = eps1.min(eps3 / (nb * weight.max(1e-12)));
    }
    // σ̃ moves by at most scale·π/2^t per label step.
    let scale = match method {
        ReadoutMethod::Hhl => smax,
        _ => a_f,
    };
    let phase = match cfg.phase_bits {
        Some(t) => PhaseConfig::with_bits(t)?,
        None => PhaseConfig::from_epsilon_guarded(eps1 / scale, cfg.guard_bits)?,
    };
    let run = match method {
        ReadoutMethod::Hhl => hhl_run(a, b, smax, &phase, cfg.exact_phase)?,
        _ => sve_run(a, b, smax, &phase, cfg.exact_phase)?,
    };
    let jdim = 1usize << run.jq;
    let b_f = b.frobenius();
    let mut attempt = run.attempt.clone();
    attempt.classical_entries = 0;

    let mut ledger = CostLedger::default();
    let mut bits = if cfg.exact_phase { 0 } else { phase.phase_bits };
    for (j, nb) in col_norms.iter().enumerate() {
        if *nb == 0.0 {
            continue;
        }
        let eps2 = eps3 / (nb * smax);
        let overlap_cfg = PhaseConfig::from_epsilon(eps2 / parts)?;
        bits = bits.max(overlap_cfg.phase_bits);
        for i in 0..a.rows() {
            // Branch amplitude of the single-column run: the joint run carries ‖B_j‖/‖B‖_F.
            let l = run.raw[i * jdim + j] * (b_f / nb);
            let re = overlap_estimate(l.re, 1, &overlap_cfg)?;
            let mut calls = re.ledger.total_calls();
            let mut value = C64::new(re.value, 0.0);
            if !real {
                let im = overlap_estimate(l.im, 1, &overlap_cfg)?;
                calls += im.ledger.total_calls();
                value.im = im.value;
            }
            c_tilde.set(i, j, value * (nb * smax));
            ledger.absorb(&attempt.repeated(calls));
        }
    }
    let kappa = svd.sigmas.iter().rev().find(|s| **s > 0.0).map_or(1.0, |m| smax / m);
    let n = a.rows().max(a.cols()).max(b.cols()) as f64;
    let b3 = col_norms.iter().map(|x| x.powi(3)).sum::<f64>();
    match method {
        ReadoutMethod::Hhl => ledger.record_model("readout_hhl_model", kappa * kappa * a_f * a_f * b3 / (eps_abs * eps_abs)),
        _ => ledger.record_model("readout_sve_model", n.sqrt() * kappa * a_f * a_f * b3 / (eps_abs * eps_abs)),
    }
    finish(method, a, b, eps_abs, c_tilde, bits, ledger)
}
