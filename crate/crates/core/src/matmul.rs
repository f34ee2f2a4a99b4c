//! Pipelines that output the quantum state |AB⟩: swap test, rank-one products and their
//! linear combination, singular value estimation, and HHL on the Hermitian dilation.
//!
//! Every pipeline runs the circuit on a dense statevector, postselects exactly, and charges
//! amplitude amplification as ceil(1/√p) repetitions of one attempt.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{QmmError, Result};
use crate::linalg::{
    compute_svd, exact_product, hermitian_dilation, hermitian_exp_i, inner, norm, qubits_for, unitary_from_first_column,
    vectorize, DenseMatrix, SvdBundle, C64, ONE, ZERO,
};
use crate::prep::lcu_combine;
use crate::qpe::{
    grover_matrix, inverse_phase_estimate, phase_estimate, rotate_by_value, signed_label, PhaseConfig, UnitaryFamily,
    GUARD_BITS,
};
use crate::sim::{amplitude_distance, charge_amplification, CostLedger, PreparedState, Statevector};
use crate::swap_test::{label_to_inner, swap_pair_state, PHASE_REG};

pub const ROW_REG: &str = "i";
pub const COL_REG: &str = "j";
const ANCILLA: &str = "anc";
/// Tolerance used as the bound in exact-phase mode, where the only error is rounding.
pub const EXACT_TOL: f64 = 1e-10;
/// Relative component of a B column outside the nonzero-σ right singular space above which
/// the support condition counts as violated.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    SwapTest,
    RankOne,
    Lcu,
    Sve,
    Hhl,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::SwapTest => "swap",
            Pipeline::RankOne => "rank-one",
            Pipeline::Lcu => "lcu",
            Pipeline::Sve => "sve",
            Pipeline::Hhl => "hhl",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Overrides the phase bits derived from the target accuracy.
    pub phase_bits: Option<u32>,
    pub guard_bits: u32,
    /// Replaces estimation, rotation and uncomputation by the exact operator they approximate.
    pub exact_phase: bool,
    /// Turns a support violation into an error instead of a report field.
    pub strict_support: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { phase_bits: None, guard_bits: GUARD_BITS, exact_phase: false, strict_support: false }
    }
}

impl PipelineConfig {
    pub fn exact() -> Self {
        Self { exact_phase: true, ..Self::default() }
    }

    fn phase(&self, accuracy: f64) -> Result<PhaseConfig> {
        match self.phase_bits {
            Some(t) => PhaseConfig::with_bits(t),
            None => PhaseConfig::from_epsilon_guarded(accuracy, self.guard_bits),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    pub method: Pipeline,
    /// Approximation of |AB⟩ on registers (i, j).
    pub state: PreparedState,
    pub target: Statevector,
    /// ‖|AB⟩ − state‖₂, no phase alignment.
    pub realized_error: f64,
    pub predicted_bound: f64,
    /// Accuracy ε fed to the bound: π/2^t for estimation-based pipelines, 0 in exact-phase mode.
    pub accuracy: f64,
    pub phase_bits: u32,
    /// Closed-form success probability the postselection should reproduce.
    pub predicted_success: f64,
    /// Realized s̃_ij row-major (swap test) or realized σ̃_k per singular triple (SVE, HHL).
    /// `None` where the input has no weight.
    pub effective_values: Vec<Option<f64>>,
    /// Largest relative part of a B column outside the nonzero-σ right singular space.
    pub support_residual: f64,
    /// ≈ AB rebuilt from the postselected branch before normalization.
    pub unnormalized: DenseMatrix,
    pub ledger: CostLedger,
}

impl PipelineResult {
    pub fn within_bound(&self) -> bool {
        self.realized_error <= self.predicted_bound
    }

    pub fn success_probability(&self) -> f64 {
        self.state.success_probability
    }
}

/// U_M, U_N and the walk built from them, for a fixed A padded to powers of two.
#[derive(Clone, Debug)]
pub struct SveOperators {
    /// M|i⟩ = |i⟩|A_i⟩ with |A_i⟩ = conj(A_{i•})/‖A_{i•}‖, so that M†N = A/‖A‖_F.
    pub iso_m: DenseMatrix,
    /// N|j⟩ = |A_F⟩|j⟩ with |A_F⟩ the normalized vector of row norms.
    pub iso_n: DenseMatrix,
    /// W = (2MM† − I)(2NN† − I).
    pub walk: DenseMatrix,
    pub row_qubits: usize,
    pub col_qubits: usize,
    pub frobenius: f64,
    rows: usize,
    cols: usize,
    row_states: Vec<Vec<C64>>,
    norm_state: Vec<C64>,
}

/// W restricted to span{M u, N v}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePhase {
    /// θ ∈ [0, π] with eigenvalues e^{±iθ}.
    pub theta: f64,
    /// Largest leak of W out of the plane.
    pub residual: f64,
}

/// Unit vector along `v` padded to `dim`, or |0⟩ when `v` vanishes (its weight is zero anyway).
fn unit_or_first(v: &[C64], dim: usize) -> Vec<C64> {
    let mut out = vec![ZERO; dim];
    let n = norm(v);
    if n > 0.0 {
        for (o, x) in out.iter_mut().zip(v) {
            *o = x / n;
        }
    } else {
        out[0] = ONE;
    }
    out
}

fn projector_reflection(iso: &DenseMatrix) -> Result<DenseMatrix> {
    let p = iso.matmul(&iso.adjoint())?;
    p.scaled(C64::new(2.0, 0.0)).sub(&DenseMatrix::identity(p.rows()))
}

impl SveOperators {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let f = a.frobenius();
        if f == 0.0 {
            return Err(QmmError::ZeroInput("SVE needs a nonzero matrix".into()));
        }
        let (rq, cq) = (qubits_for(a.rows()), qubits_for(a.cols()));
        let (r, c) = (1usize << rq, 1usize << cq);
        let row_states: Vec<Vec<C64>> = (0..r)
            .map(|i| {
                let row: Vec<C64> = if i < a.rows() { a.row(i).iter().map(|z| z.conj()).collect() } else { vec![] };
                unit_or_first(&row, c)
            })
            .collect();
        let norms: Vec<C64> = a.row_norms().into_iter().map(|x| C64::new(x, 0.0)).collect();
        let norm_state = unit_or_first(&norms, r);
        let mut iso_m = DenseMatrix::zeros(r * c, r);
        let mut iso_n = DenseMatrix::zeros(r * c, c);
        for i in 0..r {
            for k in 0..c {
                iso_m.set(i * c + k, i, row_states[i][k]);
                iso_n.set(i * c + k, k, norm_state[i]);
            }
        }
        let walk = projector_reflection(&iso_m)?.matmul(&projector_reflection(&iso_n)?)?;
        Ok(Self { iso_m, iso_n, walk, row_qubits: rq, col_qubits: cq, frobenius: f, rows: a.rows(), cols: a.cols(), row_states, norm_state })
    }

    pub fn dim(&self) -> usize {
        self.walk.rows()
    }

    /// M†N, which equals A/‖A‖_F on the unpadded block.
    pub fn m_dagger_n(&self) -> Result<DenseMatrix> {
        self.iso_m.adjoint().matmul(&self.iso_n)
    }

    /// max(‖M†M − I‖, ‖N†N − I‖, ‖M†N − A/‖A‖_F‖) entrywise.
    pub fn invariant_deviation(&self, a: &DenseMatrix) -> Result<f64> {
        let mm = self.iso_m.adjoint().matmul(&self.iso_m)?.max_abs_diff(&DenseMatrix::identity(self.iso_m.cols()));
        let nn = self.iso_n.adjoint().matmul(&self.iso_n)?.max_abs_diff(&DenseMatrix::identity(self.iso_n.cols()));
        let target = a.padded(self.iso_m.cols(), self.iso_n.cols()).scaled(C64::new(1.0 / self.frobenius, 0.0));
        let mn = self.m_dagger_n()?.max_abs_diff(&target);
        Ok(mm.max(nn).max(mn))
    }

    /// Eigenphase of W on span{M u, N v} for a singular pair (u, v) of A.
    pub fn plane_phase(&self, u: &[C64], v: &[C64]) -> Result<PlanePhase> {
        let x = self.iso_m.mul_vec(&unit_or_first(u, self.iso_m.cols()))?;
        let y = self.iso_n.mul_vec(&unit_or_first(v, self.iso_n.cols()))?;
        let ov = inner(&x, &y);
        let perp: Vec<C64> = y.iter().zip(&x).map(|(b, a)| b - ov * a).collect();
        let pn = norm(&perp);
        let wx = self.walk.mul_vec(&x)?;
        if pn < 1e-9 {
            // M u = N v up to phase: a one-dimensional invariant line.
            let lam = inner(&x, &wx);
            let leak = norm(&wx.iter().zip(&x).map(|(w, a)| w - lam * a).collect::<Vec<_>>());
            return Ok(PlanePhase { theta: lam.arg().abs(), residual: leak });
        }
        let b2: Vec<C64> = perp.iter().map(|z| z / pn).collect();
        let wb = self.walk.mul_vec(&b2)?;
        let r = [[inner(&x, &wx), inner(&x, &wb)], [inner(&b2, &wx), inner(&b2, &wb)]];
        let leak = |w: &[C64], c0: C64, c1: C64| {
            norm(&w.iter().zip(x.iter().zip(&b2)).map(|(w, (p, q))| w - c0 * p - c1 * q).collect::<Vec<_>>())
        };
        let residual = leak(&wx, r[0][0], r[1][0]).max(leak(&wb, r[0][1], r[1][1]));
        let tr = r[0][0] + r[1][1];
        let det = r[0][0] * r[1][1] - r[0][1] * r[1][0];
        let disc = (tr * tr - det * 4.0).sqrt();
        let (l1, l2) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
        Ok(PlanePhase { theta: (l1.arg().abs() + l2.arg().abs()) / 2.0, residual })
    }

    /// U_M as a select: block i maps |0⟩ to |A_i⟩ on the column register.
    fn row_preparers(&self) -> Result<Vec<DenseMatrix>> {
        self.row_states.iter().map(|s| unitary_from_first_column(s)).collect()
    }

    fn norm_state(&self) -> &[C64] {
        &self.norm_state
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

fn check_conformable(a: &DenseMatrix, b: &DenseMatrix) -> Result<()> {
    if a.cols() != b.rows() {
        return Err(QmmError::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// Exact product, refusing AB = 0 relative to ‖A‖_F‖B‖_F.
fn nonzero_product(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    check_conformable(a, b)?;
    let c = exact_product(a, b)?;
    if c.frobenius() <= 1e-13 * a.frobenius() * b.frobenius() || c.frobenius() == 0.0 {
        return Err(QmmError::ZeroProduct);
    }
    Ok(c)
}

fn require_real(m: &DenseMatrix, what: &str) -> Result<()> {
    if !m.is_real() {
        return Err(QmmError::InvalidMatrix(format!("{what} must be real for the swap-test pipeline")));
    }
    Ok(())
}

/// Projects each register onto |0⟩ in turn without renormalizing.
fn project_zero(s: &Statevector, regs: &[&str]) -> Result<Statevector> {
    let mut cur = s.clone();
    for r in regs {
        let (layout, amps) = cur.project_raw(r, 0)?;
        cur = Statevector::unchecked(layout, amps)?;
    }
    Ok(cur)
}

/// Per-attempt ledger repeated ceil(1/√p) times.
fn amplified(per_attempt: &CostLedger, p: f64) -> Result<CostLedger> {
    let mut probe = CostLedger::default();
    let rounds = charge_amplification(&mut probe, p)?;
    let mut out = per_attempt.repeated(rounds);
    out.amplification_rounds += rounds;
    out.postselect_probability = p;
    Ok(out)
}

/// Raw branch amplitudes over the padded (i, j) grid, truncated to `rows` × `cols` and scaled.
fn to_matrix(raw: &[C64], jdim: usize, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m.set(i, j, raw[i * jdim + j] * scale);
        }
    }
    m
}

struct Branch {
    /// Unnormalized amplitudes over the padded (i, j) grid.
    raw: Vec<C64>,
    iq: usize,
    jq: usize,
}

impl Branch {
    fn probability(&self) -> f64 {
        self.raw.iter().map(|z| z.norm_sqr()).sum()
    }

    fn state(&self) -> Result<Statevector> {
        let p = self.probability();
        if p <= 0.0 {
            return Err(QmmError::ZeroProbability { register: ANCILLA.into(), outcome: 0 });
        }
        let s = p.sqrt();
        Statevector::new(&[(ROW_REG, self.iq), (COL_REG, self.jq)], self.raw.iter().map(|z| z / s).collect())
    }
}

/// Swap-pipeline bound √(2rε² + 2r²ε²) with r = ‖A‖²‖B‖²/‖C‖².
pub fn swap_bound(a_f: f64, b_f: f64, c_f: f64, eps: f64) -> f64 {
    let r = (a_f * b_f / c_f).powi(2);
    eps * (2.0 * r + 2.0 * r * r).sqrt()
}

/// Right-hand side of the SVE error bound. `scale` is ‖A‖_F for SVE and max σ for HHL;
/// `z` is Σ ‖B_j‖²|α_jk|²σ̃_k², `w` is ‖AB‖²_F and `max_sum` is max_k |σ̃_k + σ_k|.
pub fn sve_bound(eps: f64, scale: f64, b_f: f64, z: f64, w: f64, max_sum: f64) -> f64 {
    let e2 = (eps * scale).powi(2);
    let first = 2.0 * e2 * b_f * b_f / z;
    let second = 2.0 * e2 * b_f.powi(4) * max_sum * max_sum / (z * (z.sqrt() + w.sqrt()).powi(2));
    (first + second).sqrt()
}

pub fn matmul_swaptest(a: &DenseMatrix, b: &DenseMatrix, eps: f64) -> Result<PipelineResult> {
    matmul_swaptest_with(a, b, eps, &PipelineConfig::default())
}

/// Swap-test pipeline: prepare Σ‖A_i‖‖B_j‖|i,j⟩, tag each (i, j) with s̃_ij by phase estimation
/// of the Grover rotation of (|0,A_i⟩ + |1,B_j⟩)/√2, rotate an ancilla by s̃_ij, uncompute, postselect.
pub fn matmul_swaptest_with(a: &DenseMatrix, b: &DenseMatrix, eps: f64, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let c = nonzero_product(a, b)?;
    require_real(a, "A")?;
    require_real(b, "B")?;
    let (a_f, b_f, c_f) = (a.frobenius(), b.frobenius(), c.frobenius());
    let ratio = (a_f * b_f / c_f).powi(2);
    let phase = cfg.phase(eps / ratio)?;
    let t = phase.phase_bits;
    let (l, m, n) = (a.rows(), a.cols(), b.cols());
    let (iq, jq, dq) = (qubits_for(l), qubits_for(n), qubits_for(m));
    let (idim, jdim, ddim) = (1usize << iq, 1usize << jq, 1usize << dq);
    let (rn, cn) = (a.row_norms(), b.col_norms());
    let weight = |i: usize, j: usize| if i < l && j < n { rn[i] * cn[j] } else { 0.0 };

    let mut blocks = Vec::with_capacity(idim * jdim);
    for i in 0..idim {
        let x = if i < l { unit_or_first(&a.row(i), ddim) } else { unit_or_first(&[], ddim) };
        for j in 0..jdim {
            let y = if j < n { unit_or_first(&b.col(j), ddim) } else { unit_or_first(&[], ddim) };
            blocks.push(swap_pair_state(&x, &y));
        }
    }
    let preps: Vec<DenseMatrix> = blocks.iter().map(|phi| unitary_from_first_column(phi)).collect::<Result<_>>()?;

    let amps: Vec<C64> =
        (0..idim * jdim).map(|k| C64::new(weight(k / jdim, k % jdim) / (a_f * b_f), 0.0)).collect();
    let s = Statevector::new(&[(ROW_REG, iq), (COL_REG, jq)], amps)?.with_register("c", 1)?.with_register("d", dq)?;
    let s = s.apply_select(&[ROW_REG, COL_REG], &["c", "d"], |k| Some(&preps[k]))?;

    let mut attempt = CostLedger::default();
    // |A_F⟩, |B_F⟩, then the controlled preparation of |A_i⟩, |B_j⟩ and its inverse.
    attempt.charge_oracle(6);
    attempt.classical_entries = (l * m + m * n) as u64;
    let raw = if cfg.exact_phase {
        // −(G + G†)/2 has eigenvalue −cos 2θ = s on the plane of each block.
        let ops: Vec<DenseMatrix> = blocks
            .iter()
            .map(|phi| {
                let g = grover_matrix(phi);
                g.add(&g.adjoint()).map(|h| h.scaled(C64::new(-0.5, 0.0)))
            })
            .collect::<Result<_>>()?;
        let s = s.apply_select(&[ROW_REG, COL_REG], &["c", "d"], |k| Some(&ops[k]))?;
        let inv: Vec<DenseMatrix> = preps.iter().map(DenseMatrix::adjoint).collect();
        let s = s.apply_select(&[ROW_REG, COL_REG], &["c", "d"], |k| Some(&inv[k]))?;
        project_zero(&s, &["c", "d"])?
    } else {
        let family = UnitaryFamily::selected(&[ROW_REG, COL_REG], &["c", "d"], blocks.iter().map(|phi| grover_matrix(phi)).collect(), 4);
        let s = phase_estimate(&s, &family, PHASE_REG, &phase, &mut attempt)?;
        let s = rotate_by_value(&s, PHASE_REG, |y| label_to_inner(y, t), ANCILLA)?;
        let s = inverse_phase_estimate(&s, &family, PHASE_REG, &phase, &mut attempt)?;
        let inv: Vec<DenseMatrix> = preps.iter().map(DenseMatrix::adjoint).collect();
        let s = s.apply_select(&[ROW_REG, COL_REG], &["c", "d"], |k| Some(&inv[k]))?;
        project_zero(&s, &[ANCILLA, PHASE_REG, "c", "d"])?
    };
    let branch = Branch { raw: raw.amplitudes().to_vec(), iq, jq };
    let p = branch.probability();
    let state = branch.state()?;
    let mut ledger = amplified(&attempt, p)?;
    let accuracy = if cfg.exact_phase { 0.0 } else { phase.grid_epsilon() };
    ledger.record_model("swap_model", (a_f * b_f / c_f).powi(3) / eps);
    ledger.record_model("swap_lcu_comparison", lcu_weight(a, b) / (c_f * eps));

    let effective_values = (0..idim * jdim)
        .map(|k| {
            let w = weight(k / jdim, k % jdim);
            (w > 0.0).then(|| branch.raw[k].re * a_f * b_f / w)
        })
        .collect();
    let target = vectorize(&c)?.state;
    let realized_error = amplitude_distance(&target, &state);
    let predicted_bound = if cfg.exact_phase { EXACT_TOL } else { swap_bound(a_f, b_f, c_f, accuracy) };
    Ok(PipelineResult {
        method: Pipeline::SwapTest,
        unnormalized: to_matrix(&branch.raw, jdim, l, n, a_f * b_f),
        state: PreparedState { state, success_probability: p, ledger: ledger.clone() },
        target,
        realized_error,
        predicted_bound,
        accuracy,
        phase_bits: if cfg.exact_phase { 0 } else { t },
        predicted_success: (c_f / (a_f * b_f)).powi(2),
        effective_values,
        support_residual: 0.0,
        ledger,
    })
}

/// Σ_k ‖A_{•k}‖‖B_{k•}‖, the weight of the column-row expansion.
pub fn lcu_weight(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let ac = a.col_norms();
    let br = b.row_norms();
    ac.iter().zip(&br).map(|(x, y)| x * y).sum()
}

pub fn rank_one_product(a: &[f64], b: &[f64], eps: f64) -> Result<PipelineResult> {
    rank_one_product_with(a, b, eps, &PipelineConfig::default())
}

/// |a⟩⊗|b⟩ as the product of the column a with the row bᵀ. Every inner product is ±1, so the
/// phase labels are exact and the success probability is one.
pub fn rank_one_product_with(a: &[f64], b: &[f64], eps: f64, cfg: &PipelineConfig) -> Result<PipelineResult> {
    if a.is_empty() || b.is_empty() || a.iter().all(|x| *x == 0.0) || b.iter().all(|x| *x == 0.0) {
        return Err(QmmError::ZeroInput("rank-one product needs nonzero vectors".into()));
    }
    let am = DenseMatrix::from_real(a.len(), 1, a)?;
    let bm = DenseMatrix::from_real(1, b.len(), b)?;
    let mut r = matmul_swaptest_with(&am, &bm, eps, cfg)?;
    r.method = Pipeline::RankOne;
    r.ledger.models.clear();
    r.ledger.record_model("rank_one_model", 1.0 / eps);
    r.state.ledger = r.ledger.clone();
    if !cfg.exact_phase {
        r.predicted_bound = r.predicted_bound.min(eps);
    }
    Ok(r)
}

pub fn matmul_lcu(a: &DenseMatrix, b: &DenseMatrix, eps: f64) -> Result<PipelineResult> {
    matmul_lcu_with(a, b, eps, &PipelineConfig::default())
}

/// AB = Σ_k A_{•k}B_{k•}: one rank-one product per k, combined with weights ‖A_{•k}‖‖B_{k•}‖.
pub fn matmul_lcu_with(a: &DenseMatrix, b: &DenseMatrix, eps: f64, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let c = nonzero_product(a, b)?;
    require_real(a, "A")?;
    require_real(b, "B")?;
    if a.rows() * b.cols() == 1 {
        return Err(QmmError::Parameter("a 1x1 product is a scalar, not a state".into()));
    }
    let jq = qubits_for(b.cols());
    let mut states = Vec::new();
    let mut weights = Vec::new();
    let mut phase_bits = 0;
    for k in 0..a.cols() {
        let col: Vec<f64> = a.col(k).iter().map(|z| z.re).collect();
        let row: Vec<f64> = b.row(k).iter().map(|z| z.re).collect();
        let w = norm(&a.col(k)) * norm(&b.row(k));
        if w == 0.0 {
            continue;
        }
        let r = rank_one_product_with(&col, &row, eps, cfg)?;
        phase_bits = phase_bits.max(r.phase_bits);
        states.push(r.state);
        weights.push(w);
    }
    let combined = lcu_combine(&states, &weights)?;
    let p = combined.success_probability;
    let mut ledger = combined.ledger.clone();
    ledger.classical_entries = (a.rows() * a.cols() + b.rows() * b.cols()) as u64;
    let total_w: f64 = weights.iter().sum();
    ledger.record_model("lcu_model", total_w / (eps * c.frobenius()));

    let target = vectorize(&c)?.state;
    let realized_error = amplitude_distance(&target, &combined.state);
    let jdim = 1usize << jq;
    let raw: Vec<C64> = combined.state.amplitudes().iter().map(|z| z * p.sqrt()).collect();
    Ok(PipelineResult {
        method: Pipeline::Lcu,
        unnormalized: to_matrix(&raw, jdim, a.rows(), b.cols(), total_w),
        state: PreparedState { state: combined.state, success_probability: p, ledger: ledger.clone() },
        target,
        realized_error,
        predicted_bound: if cfg.exact_phase { EXACT_TOL } else { eps },
        accuracy: if cfg.exact_phase { 0.0 } else { PI / f64::from(1u32 << phase_bits.max(1)) },
        phase_bits,
        predicted_success: (c.frobenius() / total_w).powi(2),
        effective_values: vec![],
        support_residual: 0.0,
        ledger,
    })
}

/// Largest ‖(I − V_r V_r†) B_{•j}‖/‖B_{•j}‖ over the columns, V_r the nonzero-σ right vectors.
pub fn support_residual(svd: &SvdBundle, b: &DenseMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..b.cols() {
        let col = b.col(j);
        let nb = norm(&col);
        if nb == 0.0 {
            continue;
        }
        let mut rest = col.clone();
        for (v, s) in svd.right.iter().zip(&svd.sigmas) {
            if *s > 0.0 {
                let c = inner(v, &col);
                rest.iter_mut().zip(v).for_each(|(r, x)| *r -= c * x);
            }
        }
        worst = worst.max(norm(&rest) / nb);
    }
    worst
}

pub(crate) fn check_support(svd: &SvdBundle, b: &DenseMatrix, strict: bool) -> Result<f64> {
    let r = support_residual(svd, b);
    if strict && r > SUPPORT_TOL {
        return Err(QmmError::Support(format!(
            "a column of B has relative weight {r:.3e} on zero singular values of A"
        )));
    }
    Ok(r)
}

/// σ̃_k realized per singular triple: ⟨u_k|column j of the output⟩ / ⟨v_k|B_j⟩ on the column
/// with the largest overlap.
fn realized_sigmas(svd: &SvdBundle, b: &DenseMatrix, out: &DenseMatrix) -> Vec<Option<f64>> {
    svd.left
        .iter()
        .zip(&svd.right)
        .map(|(u, v)| {
            let (j, ov) = (0..b.cols())
                .map(|j| (j, inner(v, &b.col(j))))
                .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))?;
            if ov.norm() < 1e-9 * b.frobenius() {
                return None;
            }
            Some((inner(u, &out.col(j)) / ov).re)
        })
        .collect()
}

/// |B⟩ = Σ_j B_{•j}|j⟩/‖B‖_F on the layout (k, p, j) with p = 0.
fn column_state(b: &DenseMatrix, kdim: usize, pdim: usize, jdim: usize) -> Vec<C64> {
    let bf = b.frobenius();
    let mut amps = vec![ZERO; kdim * pdim * jdim];
    for k in 0..b.rows() {
        for j in 0..b.cols() {
            amps[(k * pdim) * jdim + j] = b.get(k, j) / bf;
        }
    }
    amps
}

struct SpectralInstance {
    c: DenseMatrix,
    svd: SvdBundle,
    sigma_max: f64,
    support: f64,
}

fn spectral_instance(a: &DenseMatrix, b: &DenseMatrix, cfg: &PipelineConfig) -> Result<SpectralInstance> {
    if a.frobenius() == 0.0 {
        return Err(QmmError::ZeroInput("A is the zero matrix".into()));
    }
    let c = nonzero_product(a, b)?;
    let svd = compute_svd(a)?;
    let support = check_support(&svd, b, cfg.strict_support)?;
    let sigma_max = svd.sigma_max();
    Ok(SpectralInstance { c, svd, sigma_max, support })
}

/// Phase accuracy for the SVE/HHL budget: target state error ε₃ becomes
/// ε₂ = ε₃‖AB‖², ε₁ = ε₂/(‖B‖² max σ), and ε = ε₁/scale.
fn spectral_accuracy(eps: f64, c_f: f64, b_f: f64, sigma_max: f64, scale: f64) -> f64 {
    let eps2 = eps * c_f * c_f;
    let eps1 = eps2 / (b_f * b_f * sigma_max);
    eps1 / scale
}

pub fn matmul_sve(a: &DenseMatrix, b: &DenseMatrix, eps: f64) -> Result<PipelineResult> {
    matmul_sve_with(a, b, eps, &PipelineConfig::default())
}

/// SVE pipeline: |B⟩ → U_N, phase estimation on W, phase shift e^{iθ̃/2}, rotation by σ̃/max σ,
/// uncomputation, U_M†, postselection of the ancilla, phase and column registers on |0⟩.
pub fn matmul_sve_with(a: &DenseMatrix, b: &DenseMatrix, eps: f64, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let inst = spectral_instance(a, b, cfg)?;
    let (a_f, b_f, c_f) = (a.frobenius(), b.frobenius(), inst.c.frobenius());
    let phase = cfg.phase(spectral_accuracy(eps, c_f, b_f, inst.sigma_max, a_f))?;
    let run = sve_run(a, b, inst.sigma_max, &phase, cfg.exact_phase)?;
    finish_spectral(Pipeline::Sve, a, b, eps, cfg, &inst, run, a_f)
}

/// Unnormalized surviving branch of one spectral-pipeline attempt.
pub(crate) struct SpectralRun {
    /// Amplitudes over the padded (i, j) grid, row register truncated to the rows of A.
    pub raw: Vec<C64>,
    pub iq: usize,
    pub jq: usize,
    /// Rotation constant c: the branch approximates c·AB/‖B‖_F.
    pub scale: f64,
    pub phase: PhaseConfig,
    pub attempt: CostLedger,
}

impl SpectralRun {
    fn new(a: &DenseMatrix, raw_full: &[C64], jq: usize, scale: f64, phase: &PhaseConfig, attempt: CostLedger) -> Self {
        let iq = qubits_for(a.rows());
        // Rows past the padded row count carry no weight; drop them.
        let raw = raw_full[..(1usize << iq) << jq].to_vec();
        Self { raw, iq, jq, scale, phase: *phase, attempt }
    }
}

/// One attempt of the SVE circuit on (A, B). The rotation cap is max σ = `sigma_max`.
pub(crate) fn sve_run(
    a: &DenseMatrix,
    b: &DenseMatrix,
    sigma_max: f64,
    phase: &PhaseConfig,
    exact_phase: bool,
) -> Result<SpectralRun> {
    let ops = SveOperators::new(a)?;
    let a_f = a.frobenius();
    let t = phase.phase_bits;
    let nlab = phase.dim() as f64;
    let (rq, kq, jq) = (ops.row_qubits, ops.col_qubits, qubits_for(b.cols()));
    let (rdim, kdim, jdim) = (1usize << rq, 1usize << kq, 1usize << jq);
    let pq = if exact_phase { 0 } else { t as usize };
    let pdim = 1usize << pq;
    // Cap for the rotation: max σ, so that c·σ̃ ≤ 1 for every decoded label.
    let cap = sigma_max;
    let scale = 1.0 / cap;

    // |A_F⟩ ⊗ |B⟩ with layout (r, k, p, j).
    let col_amps = column_state(b, kdim, pdim, jdim);
    let block = kdim * pdim * jdim;
    let mut amps = vec![ZERO; rdim * block];
    for (r, w) in ops.norm_state().iter().enumerate() {
        for (x, y) in amps[r * block..(r + 1) * block].iter_mut().zip(&col_amps) {
            *x = w * y;
        }
    }
    let s = Statevector::new(&[("r", rq), ("k", kq), (PHASE_REG, pq), (COL_REG, jq)], amps)?;

    let mut attempt = CostLedger::default();
    // |B⟩, U_N, and U_M† at the end.
    attempt.charge_oracle(3);
    attempt.classical_entries = (a.rows() * a.cols() + b.rows() * b.cols()) as u64;
    let s = if exact_phase {
        // (‖A‖/2)(W + I) has eigenvalue ‖A‖cos(θ/2)e^{iθ/2} = σ e^{iθ/2}.
        let op = ops.walk.add(&DenseMatrix::identity(ops.dim()))?.scaled(C64::new(scale * a_f / 2.0, 0.0));
        s.apply_select(&[], &["r", "k"], |_| Some(&op))?
    } else {
        let family = UnitaryFamily::single(ops.walk.clone(), &["r", "k"], 4);
        let s = phase_estimate(&s, &family, PHASE_REG, phase, &mut attempt)?;
        let s = s.apply_diagonal(&[PHASE_REG], |y| C64::from_polar(1.0, PI * signed_label(y, t) as f64 / nlab))?;
        let sigma_of = |y: usize| (a_f * (PI * signed_label(y, t) as f64 / nlab).cos()).min(cap);
        let s = rotate_by_value(&s, PHASE_REG, |y| scale * sigma_of(y), ANCILLA)?;
        inverse_phase_estimate(&s, &family, PHASE_REG, phase, &mut attempt)?
    };
    let unprep: Vec<DenseMatrix> = ops.row_preparers()?.iter().map(DenseMatrix::adjoint).collect();
    let s = s.apply_select(&["r"], &["k"], |r| Some(&unprep[r]))?;
    let regs: &[&str] = if exact_phase { &["k", PHASE_REG] } else { &[ANCILLA, PHASE_REG, "k"] };
    let out = project_zero(&s, regs)?;
    Ok(SpectralRun::new(a, out.amplitudes(), jq, scale, phase, attempt))
}

#[allow(clippy::too_many_arguments)]
fn finish_spectral(
    method: Pipeline,
    a: &DenseMatrix,
    b: &DenseMatrix,
    eps: f64,
    cfg: &PipelineConfig,
    inst: &SpectralInstance,
    run: SpectralRun,
    accuracy_scale: f64,
) -> Result<PipelineResult> {
    let jdim = 1usize << run.jq;
    let t = run.phase.phase_bits;
    let branch = Branch { raw: run.raw, iq: run.iq, jq: run.jq };
    let p = branch.probability();
    let state = branch.state()?;
    let b_f = b.frobenius();
    let c_f = inst.c.frobenius();
    let unnormalized = to_matrix(&branch.raw, jdim, a.rows(), b.cols(), b_f / run.scale);
    let effective_values = realized_sigmas(&inst.svd, b, &unnormalized);
    let z = unnormalized.frobenius().powi(2);
    let max_sum = effective_values
        .iter()
        .zip(&inst.svd.sigmas)
        .filter_map(|(e, s)| e.map(|e| (e + s).abs()))
        .fold(0.0, f64::max);
    let accuracy = if cfg.exact_phase { 0.0 } else { run.phase.grid_epsilon() };
    let predicted_bound =
        if cfg.exact_phase { EXACT_TOL } else { sve_bound(accuracy, accuracy_scale, b_f, z, c_f * c_f, max_sum) };
    let mut ledger = amplified(&run.attempt, p)?;
    let kappa = inst.svd.sigmas.iter().rev().find(|s| **s > 0.0).map_or(1.0, |m| inst.sigma_max / m);
    match method {
        Pipeline::Hhl => ledger.record_model("hhl_model", kappa.powi(3) / eps),
        _ => ledger.record_model("sve_model", a.frobenius() * b_f * kappa * kappa / (c_f * eps)),
    }
    let target = vectorize(&inst.c)?.state;
    let realized_error = amplitude_distance(&target, &state);
    Ok(PipelineResult {
        method,
        state: PreparedState { state, success_probability: p, ledger: ledger.clone() },
        target,
        realized_error,
        predicted_bound,
        accuracy,
        phase_bits: if cfg.exact_phase { 0 } else { t },
        predicted_success: (c_f / (b_f * inst.sigma_max)).powi(2),
        effective_values,
        support_residual: inst.support,
        unnormalized,
        ledger,
    })
}

pub fn matmul_hhl(a: &DenseMatrix, b: &DenseMatrix, eps: f64) -> Result<PipelineResult> {
    matmul_hhl_with(a, b, eps, &PipelineConfig::default())
}

/// HHL on the dilation Ã = [[0, A], [A†, 0]]: start in |1⟩|B⟩, estimate the eigenvalue ±σ of Ã
/// with max σ on label 2^t/4, rotate by the signed value, uncompute and postselect block |0⟩.
pub fn matmul_hhl_with(a: &DenseMatrix, b: &DenseMatrix, eps: f64, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let inst = spectral_instance(a, b, cfg)?;
    let (b_f, c_f) = (b.frobenius(), inst.c.frobenius());
    let smax = inst.sigma_max;
    let phase = cfg.phase(spectral_accuracy(eps, c_f, b_f, smax, smax))?;
    let run = hhl_run(a, b, smax, &phase, cfg.exact_phase)?;
    finish_spectral(Pipeline::Hhl, a, b, eps, cfg, &inst, run, smax)
}

/// One attempt of the HHL circuit on (A, B) with max σ = `smax`.
pub(crate) fn hhl_run(a: &DenseMatrix, b: &DenseMatrix, smax: f64, phase: &PhaseConfig, exact_phase: bool) -> Result<SpectralRun> {
    let t = phase.phase_bits;
    let nlab = phase.dim() as f64;
    let xq = qubits_for(a.rows()).max(qubits_for(a.cols()));
    let jq = qubits_for(b.cols());
    let (xdim, jdim) = (1usize << xq, 1usize << jq);
    let pq = if exact_phase { 0 } else { t as usize };
    let pdim = 1usize << pq;
    let dil = hermitian_dilation(&a.padded(xdim, xdim));
    let scale = 1.0 / smax;

    // |1⟩_h ⊗ |B⟩ with layout (h, x, p, j).
    let col_amps = column_state(b, xdim, pdim, jdim);
    let block = xdim * pdim * jdim;
    let mut amps = vec![ZERO; 2 * block];
    amps[block..].copy_from_slice(&col_amps);
    let s = Statevector::new(&[("h", 1), ("x", xq), (PHASE_REG, pq), (COL_REG, jq)], amps)?;

    let mut attempt = CostLedger::default();
    attempt.charge_oracle(1);
    attempt.classical_entries = (a.rows() * a.cols() + b.rows() * b.cols()) as u64;
    let s = if exact_phase {
        let op = dil.scaled(C64::new(scale, 0.0));
        s.apply_select(&[], &["h", "x"], |_| Some(&op))?
    } else {
        // τ = π/(2 max σ) puts ±max σ on the labels ±2^t/4.
        let tau = PI / (2.0 * smax);
        let u = hermitian_exp_i(&dil, tau)?;
        let family = UnitaryFamily::single(u, &["h", "x"], 0);
        let s = phase_estimate(&s, &family, PHASE_REG, phase, &mut attempt)?;
        let lambda_of = |y: usize| (signed_label(y, t) as f64 * 4.0 * smax / nlab).clamp(-smax, smax);
        let s = rotate_by_value(&s, PHASE_REG, |y| scale * lambda_of(y), ANCILLA)?;
        let s = inverse_phase_estimate(&s, &family, PHASE_REG, phase, &mut attempt)?;
        attempt.hamiltonian_sim_units += 2 * phase.controlled_calls();
        s
    };
    let regs: &[&str] = if exact_phase { &["h", PHASE_REG] } else { &[ANCILLA, PHASE_REG, "h"] };
    let out = project_zero(&s, regs)?;
    Ok(SpectralRun::new(a, out.amplitudes(), jq, scale, phase, attempt))
}

/// Output of [`sve_transform`]: Σ α_i |u_i⟩|σ̃_i⟩ on registers (r, k, p, sigma), with k and p
/// returned to |0⟩ up to estimation error.
#[derive(Clone, Debug)]
pub struct SveOutput {
    pub state: Statevector,
    /// σ̃ = ‖A‖_F·decode(code) for the value register.
    pub encoding: crate::qpe::FixedPoint,
    pub frobenius: f64,
    pub phase_bits: u32,
    /// Modal σ̃ per singular triple with nonzero input weight, read from the output.
    pub estimates: Vec<Option<f64>>,
    /// Weight left outside k = p = 0.
    pub leakage: f64,
    pub ledger: CostLedger,
}

impl SveOutput {
    pub fn sigma_value(&self, code: usize) -> f64 {
        self.frobenius * self.encoding.decode(code)
    }
}

/// Σ α_i |v_i⟩ ↦ Σ α_i |u_i⟩|σ̃_i⟩. `input` is a single register over the padded column space.
pub fn sve_transform(a: &DenseMatrix, input: &Statevector, eps: f64) -> Result<SveOutput> {
    use crate::qpe::{even_codes, FixedPoint};
    let ops = SveOperators::new(a)?;
    let phase = PhaseConfig::from_epsilon(eps)?;
    let t = phase.phase_bits;
    let nlab = phase.dim();
    let (rq, kq) = (ops.row_qubits, ops.col_qubits);
    if input.layout().len() != 1 || input.total_qubits() != kq {
        return Err(QmmError::Dimension(format!("input must be one register of {kq} qubits")));
    }
    let a_f = ops.frobenius;
    let mut amps = vec![ZERO; (1usize << rq) * (1usize << kq)];
    for (r, w) in ops.norm_state().iter().enumerate() {
        for (k, x) in input.amplitudes().iter().enumerate() {
            amps[(r << kq) | k] = w * x;
        }
    }
    let s = Statevector::new(&[("r", rq), ("k", kq)], amps)?.with_register(PHASE_REG, t as usize)?;
    let mut ledger = CostLedger::default();
    ledger.charge_oracle(2);
    let family = UnitaryFamily::single(ops.walk.clone(), &["r", "k"], 4);
    let s = phase_estimate(&s, &family, PHASE_REG, &phase, &mut ledger)?;
    let s = s.apply_diagonal(&[PHASE_REG], |y| C64::from_polar(1.0, PI * signed_label(y, t) as f64 / nlab as f64))?;
    // σ̃/‖A‖_F = cos(π y_s/2^t) ∈ [0, 1] is even in the signed label.
    let encoding = FixedPoint::with_width(t);
    let codes = even_codes(nlab, |y| (PI * signed_label(y, t) as f64 / nlab as f64).cos(), encoding)?;
    let s = s.with_register("sigma", t as usize)?;
    let s = s.apply_permutation(&[PHASE_REG, "sigma"], |v| {
        let (y, w) = (v >> t, v & (nlab - 1));
        (y << t) | (w ^ codes[y])
    })?;
    let s = inverse_phase_estimate(&s, &family, PHASE_REG, &phase, &mut ledger)?;
    let unprep: Vec<DenseMatrix> = ops.row_preparers()?.iter().map(DenseMatrix::adjoint).collect();
    let s = s.apply_select(&["r"], &["k"], |r| Some(&unprep[r]))?;

    // Read the modal value-register code seen by each left singular vector on k = p = 0.
    let kept = project_zero(&s, &["k", PHASE_REG])?;
    let leakage = 1.0 - kept.norm().powi(2);
    let svd = compute_svd(a)?;
    let rdim = 1usize << rq;
    let estimates = svd
        .left
        .iter()
        .zip(&svd.right)
        .map(|(u, v)| {
            let vin: Vec<C64> = input.amplitudes()[..a.cols()].to_vec();
            if inner(v, &vin).norm() < 1e-9 {
                return None;
            }
            let mut best = (0usize, -1.0f64);
            for code in 0..nlab {
                let col: Vec<C64> = (0..rdim).map(|r| kept.amplitudes()[r * nlab + code]).collect();
                let w = inner(&u.iter().copied().chain(std::iter::repeat(ZERO)).take(rdim).collect::<Vec<_>>(), &col).norm_sqr();
                if w > best.1 {
                    best = (code, w);
                }
            }
            Some(a_f * encoding.decode(best.0))
        })
        .collect();
    Ok(SveOutput { state: s, encoding, frobenius: a_f, phase_bits: t, estimates, leakage, ledger })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{fit_loglog, generate_matrix};
    use crate::qpe::qpe_kernel;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_real(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        DenseMatrix::from_real(rows, cols, &v).unwrap()
    }

    /// |C⟩ = Σ C_ij |i, j⟩/‖C‖_F on the padded grid, built directly from the entries.
    fn vectorized_oracle(c: &DenseMatrix) -> Vec<C64> {
        let jdim = c.cols().next_power_of_two();
        let mut v = vec![ZERO; c.rows().next_power_of_two() * jdim];
        let f = c.frobenius();
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                v[i * jdim + j] = c.get(i, j) / f;
            }
        }
        v
    }

    fn dist(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn sve_operator_invariants() {
        for (k, (r, c)) in [(2, 2), (3, 3), (4, 4), (3, 5), (8, 8)].into_iter().enumerate() {
            let a = random_real(r, c, 40 + k as u64);
            let ops = SveOperators::new(&a).unwrap();
            assert!(ops.invariant_deviation(&a).unwrap() < 1e-10);
            let svd = compute_svd(&a).unwrap();
            for ((u, v), s) in svd.left.iter().zip(&svd.right).zip(&svd.sigmas) {
                let ph = ops.plane_phase(u, v).unwrap();
                assert!(ph.residual < 1e-8, "plane leak {}", ph.residual);
                assert!(((ph.theta / 2.0).cos() - s / a.frobenius()).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn walk_phases_match_singular_values(seed in 0u64..10_000, n in 2usize..6) {
            let a = random_real(n, n, seed);
            let ops = SveOperators::new(&a).unwrap();
            prop_assert!(ops.walk.unitarity_deviation() < 1e-10);
            let svd = compute_svd(&a).unwrap();
            for ((u, v), s) in svd.left.iter().zip(&svd.right).zip(&svd.sigmas) {
                let ph = ops.plane_phase(u, v).unwrap();
                prop_assert!(((ph.theta / 2.0).cos() - s / a.frobenius()).abs() < 1e-8);
            }
        }

        #[test]
        fn exact_phase_pipelines_reproduce_the_product(seed in 0u64..10_000) {
            let a = random_real(3, 4, seed);
            let b = random_real(4, 2, seed + 1);
            let want = vectorized_oracle(&exact_product(&a, &b).unwrap());
            for f in [matmul_swaptest_with, matmul_lcu_with, matmul_sve_with, matmul_hhl_with] {
                let r = f(&a, &b, 0.05, &PipelineConfig::exact()).unwrap();
                prop_assert!(dist(r.state.state.amplitudes(), &want) < 1e-10);
            }
        }
    }

    #[test]
    fn swap_identity_pair() {
        let i2 = DenseMatrix::identity(2);
        let r = matmul_swaptest(&i2, &i2, 0.05).unwrap();
        assert!(r.within_bound());
        // ‖C‖²/‖A‖²‖B‖² = 2/4.
        assert!((r.success_probability() - 0.5).abs() < 1e-9);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [C64::new(h, 0.0), ZERO, ZERO, C64::new(h, 0.0)];
        assert!(dist(r.state.state.amplitudes(), &want) <= r.predicted_bound);
    }

    #[test]
    fn swap_times_identity_returns_a() {
        let a = random_real(4, 4, 2);
        let r = matmul_swaptest(&a, &DenseMatrix::identity(4), 0.05).unwrap();
        let d = dist(r.state.state.amplitudes(), &vectorized_oracle(&a));
        assert!(d <= r.predicted_bound, "{d} > {}", r.predicted_bound);
        assert!((d - r.realized_error).abs() < 1e-12);
    }

    #[test]
    fn swap_bound_formula() {
        let (a, b, c, e) = (2.0f64, 3.0f64, 1.5f64, 0.01f64);
        let r = (a * b / c).powi(2);
        let direct = (2.0 * r * e * e + 2.0 * r * r * e * e).sqrt();
        assert!((swap_bound(a, b, c, e) - direct).abs() < 1e-15);
    }

    #[test]
    fn nilpotent_product_is_rejected() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        for f in [matmul_swaptest, matmul_lcu, matmul_sve, matmul_hhl] {
            assert_eq!(f(&a, &a, 0.05).unwrap_err(), QmmError::ZeroProduct);
        }
    }

    #[test]
    fn rank_one_examples() {
        let r = rank_one_product(&[1.0, 0.0], &[1.0, 0.0], 0.05).unwrap();
        assert!((r.state.state.amplitudes()[0] - ONE).norm() < 1e-12);

        let r = rank_one_product(&[3.0, 4.0], &[1.0, 0.0], 0.05).unwrap();
        let want = [0.6, 0.0, 0.8, 0.0];
        for (z, w) in r.state.state.amplitudes().iter().zip(want) {
            assert!((z - C64::new(w, 0.0)).norm() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = rank_one_product(&a, &b, 0.05).unwrap();
        let (na, nb) = (a.iter().map(|x| x * x).sum::<f64>().sqrt(), b.iter().map(|x| x * x).sum::<f64>().sqrt());
        let outer: Vec<C64> = a.iter().flat_map(|x| b.iter().map(move |y| C64::new(x * y / (na * nb), 0.0))).collect();
        let fid = inner(&outer, r.state.state.amplitudes()).norm();
        assert!(fid >= 1.0 - 0.05);
    }

    #[test]
    fn lcu_matches_swap_target_and_costs_less() {
        let i2 = DenseMatrix::identity(2);
        let r = matmul_lcu(&i2, &i2, 0.05).unwrap();
        let s = matmul_swaptest(&i2, &i2, 0.05).unwrap();
        assert!(r.realized_error <= 0.05);
        assert!(dist(r.target.amplitudes(), s.target.amplitudes()) < 1e-15);

        let a = random_real(4, 4, 12);
        let b = random_real(4, 4, 112);
        let r = matmul_lcu(&a, &b, 0.05).unwrap();
        let s = matmul_swaptest(&a, &b, 0.05).unwrap();
        let fid = inner(&vectorized_oracle(&exact_product(&a, &b).unwrap()), r.state.state.amplitudes()).norm();
        assert!(fid >= 0.95);
        assert!(r.ledger.total_calls() <= s.ledger.total_calls());
    }

    #[test]
    fn lcu_single_term_reduces_to_rank_one() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 0.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        let l = matmul_lcu(&a, &b, 0.05).unwrap();
        let r = rank_one_product(&[3.0, 4.0], &[1.0, 2.0], 0.05).unwrap();
        assert!(dist(l.state.state.amplitudes(), r.state.state.amplitudes()) < 1e-12);
    }

    #[test]
    fn swap_success_probability_and_cost_slope() {
        for seed in 0..4 {
            let a = random_real(4, 4, 300 + seed);
            let b = random_real(4, 4, 400 + seed);
            let c = exact_product(&a, &b).unwrap();
            let cfg = PipelineConfig { phase_bits: Some(8), ..PipelineConfig::default() };
            let r = matmul_swaptest_with(&a, &b, 0.05, &cfg).unwrap();
            let want = (c.frobenius() / (a.frobenius() * b.frobenius())).powi(2);
            assert!((r.success_probability() / want - 1.0).abs() < 0.05);
        }
        let a = random_real(4, 4, 9);
        let b = random_real(4, 4, 10);
        let (mut xs, mut ys) = (vec![], vec![]);
        for k in 4..=8 {
            let eps = 2f64.powi(-k);
            let r = matmul_swaptest(&a, &b, eps).unwrap();
            xs.push(1.0 / eps);
            ys.push(r.ledger.oracle_calls as f64 + r.ledger.controlled_oracle_calls as f64);
        }
        let fit = fit_loglog("1/eps", &xs, &ys).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.15, "slope {}", fit.slope);
    }

    #[test]
    fn sve_examples() {
        let i2 = DenseMatrix::identity(2);
        let r = matmul_sve(&i2, &i2, 0.05).unwrap();
        assert!(r.within_bound());
        assert!((r.success_probability() - 1.0).abs() < 0.05);

        let a = DenseMatrix::diag(&[1.0, 0.5]);
        let r = matmul_sve(&a, &i2, 0.05).unwrap();
        assert!(r.within_bound());
        assert!((r.success_probability() / 0.625 - 1.0).abs() < 0.05);

        let a = generate_matrix(4, 3.0, 23).unwrap();
        let b = generate_matrix(4, 3.0, 123).unwrap();
        let r = matmul_sve(&a, &b, 0.05).unwrap();
        assert!(r.within_bound(), "{} > {}", r.realized_error, r.predicted_bound);
        assert!(r.realized_error <= 0.05);
        let want = (r.unnormalized.frobenius() / (b.frobenius() * compute_svd(&a).unwrap().sigma_max())).powi(2);
        assert!((r.success_probability() / want - 1.0).abs() < 1e-9);
    }

    /// σ_eff from the label distribution: Re(e^{−iθ/2} Σ_y P_θ(y) e^{iπy/N} min(‖A‖cos(πy/N), σ_max)).
    #[test]
    fn sve_effective_sigma_closed_form() {
        let a = generate_matrix(4, 4.0, 5).unwrap();
        let b = random_real(4, 2, 6);
        let cfg = PipelineConfig { phase_bits: Some(7), ..PipelineConfig::default() };
        let r = matmul_sve_with(&a, &b, 0.05, &cfg).unwrap();
        let svd = compute_svd(&a).unwrap();
        let (af, smax, n) = (a.frobenius(), svd.sigma_max(), 128.0);
        for (s, got) in svd.sigmas.iter().zip(&r.effective_values) {
            let theta = 2.0 * (s / af).acos();
            let mut acc = ZERO;
            for y in 0..128usize {
                let ys = signed_label(y, 7) as f64;
                let g = (af * (PI * ys / n).cos()).min(smax);
                acc += C64::from_polar(g * qpe_kernel(theta / (2.0 * PI), y, 7), PI * ys / n);
            }
            let want = (acc * C64::from_polar(1.0, -theta / 2.0)).re;
            assert!((got.unwrap() - want).abs() < 1e-9, "{} vs {want}", got.unwrap());
        }
    }

    /// For the dilation, σ_eff = Σ_y (P_φ(y) − P_{−φ}(y)) clamp(4σ_max y/N)/2 with φ = σ/(4σ_max).
    /// The label −N/2 has no positive partner, so the two halves are not exact mirrors.
    #[test]
    fn hhl_effective_sigma_closed_form() {
        let a = generate_matrix(4, 4.0, 8).unwrap();
        let b = random_real(4, 1, 9);
        let cfg = PipelineConfig { phase_bits: Some(7), ..PipelineConfig::default() };
        let r = matmul_hhl_with(&a, &b, 0.05, &cfg).unwrap();
        let svd = compute_svd(&a).unwrap();
        let smax = svd.sigma_max();
        for (s, got) in svd.sigmas.iter().zip(&r.effective_values) {
            let want: f64 = (0..128usize)
                .map(|y| {
                    let lam = (signed_label(y, 7) as f64 * 4.0 * smax / 128.0).clamp(-smax, smax);
                    let phi = s / (4.0 * smax);
                    (qpe_kernel(phi, y, 7) - qpe_kernel(-phi, y, 7)) * lam / 2.0
                })
                .sum();
            assert!((got.unwrap() - want).abs() < 1e-9, "{} vs {want}", got.unwrap());
        }
    }

    #[test]
    fn hhl_examples() {
        let b = DenseMatrix::from_rows(&[vec![0.6], vec![0.8]]).unwrap();
        let r = matmul_hhl(&DenseMatrix::identity(2), &b, 0.05).unwrap();
        assert!(r.within_bound());
        assert!(dist(r.state.state.amplitudes(), &[C64::new(0.6, 0.0), C64::new(0.8, 0.0)]) <= r.predicted_bound);

        let a = DenseMatrix::diag(&[1.0, 0.5]);
        let r = matmul_hhl(&a, &b, 0.05).unwrap();
        let z = (0.36f64 + 0.16).sqrt();
        let want = [C64::new(0.6 / z, 0.0), C64::new(0.4 / z, 0.0)];
        assert!(dist(r.state.state.amplitudes(), &want) <= r.predicted_bound);

        let a = generate_matrix(4, 3.0, 27).unwrap();
        let b = generate_matrix(4, 3.0, 127).unwrap();
        let r = matmul_hhl(&a, &b, 0.05).unwrap();
        assert!(r.within_bound());
    }

    #[test]
    fn support_checking() {
        let a = DenseMatrix::diag(&[1.0, 0.0]);
        let b = DenseMatrix::identity(2);
        let strict = PipelineConfig { strict_support: true, ..PipelineConfig::default() };
        assert!(matches!(matmul_sve_with(&a, &b, 0.05, &strict), Err(QmmError::Support(_))));
        let r = matmul_sve(&a, &b, 0.05).unwrap();
        assert!((r.support_residual - 1.0).abs() < 1e-12);
        // Only the e₀ column survives: |AB⟩ = |0,0⟩, at half the full-support probability.
        assert!((r.state.state.amplitudes()[0].norm() - 1.0).abs() < 1e-3);
        assert!((r.success_probability() - 0.5).abs() < 0.05);
    }

    #[test]
    fn sve_transform_examples() {
        let a = DenseMatrix::diag(&[1.0, 0.0]);
        let input = Statevector::from_vector("v", &[ONE, ZERO]).unwrap();
        let out = sve_transform(&a, &input, 0.05).unwrap();
        assert!((out.estimates[0].unwrap() - 1.0).abs() <= 0.05);

        let a = random_real(4, 4, 19);
        let mut rng = ChaCha8Rng::seed_from_u64(119);
        let v: Vec<C64> = (0..4).map(|_| C64::new(StandardNormal.sample(&mut rng), 0.0)).collect();
        let input = Statevector::from_vector("v", &v).unwrap();
        let eps = 0.02;
        let out = sve_transform(&a, &input, eps).unwrap();
        let svd = compute_svd(&a).unwrap();
        for (s, e) in svd.sigmas.iter().zip(&out.estimates) {
            assert!((e.unwrap() - s).abs() <= eps * a.frobenius());
        }
    }
}
