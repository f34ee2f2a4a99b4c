//! Dense statevectors over named registers, exact postselection and the cost ledger.
//!
//! Basis indices are big-endian over the layout: the first register holds the
//! most significant bits.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{QmmError, Result};
use crate::linalg::{norm, DenseMatrix, C64, ONE, ZERO};

pub const DEFAULT_MAX_QUBITS: usize = 24;
pub const NORM_TOL: f64 = 1e-10;
pub const UNITARY_TOL: f64 = 1e-10;
/// Largest layout accepted by [`verify_amplification`].
pub const GROVER_CHECK_MAX_QUBITS: usize = 6;

/// Qubit cap from `QMM_MAX_QUBITS`, default 24.
pub fn max_qubits() -> usize {
    std::env::var("QMM_MAX_QUBITS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(DEFAULT_MAX_QUBITS)
}

/// Total qubits of a layout, refusing layouts above [`max_qubits`].
fn check_budget(layout: &[Register]) -> Result<usize> {
    let total: usize = layout.iter().map(|r| r.qubits).sum();
    let cap = max_qubits();
    if total > cap {
        return Err(QmmError::QubitBudget { requested: total, cap });
    }
    Ok(total)
}

/// Fails with [`QmmError::QubitBudget`] if a layout of these registers would exceed the cap.
pub fn check_layout(layout: &[(&str, usize)]) -> Result<()> {
    let total: usize = layout.iter().map(|r| r.1).sum();
    let cap = max_qubits();
    if total > cap {
        return Err(QmmError::QubitBudget { requested: total, cap });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub qubits: usize,
}

impl Register {
    pub fn dim(&self) -> usize {
        1 << self.qubits
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    layout: Vec<Register>,
    amps: Vec<C64>,
}

/// Bit positions of an ordered register subset.
struct Pattern {
    mask: usize,
    /// Full-index bit pattern of each combined value (first register most significant).
    offsets: Vec<usize>,
}

impl Statevector {
    /// Unit-norm state on the given layout.
    pub fn new(layout: &[(&str, usize)], amps: Vec<C64>) -> Result<Self> {
        let sv = Self::unchecked(Self::build_layout(layout)?, amps)?;
        let n = norm(&sv.amps);
        if (n - 1.0).abs() > NORM_TOL {
            return Err(QmmError::NotNormalized(n));
        }
        Ok(sv)
    }

    /// Normalizes `amps` first; errors on the zero vector.
    pub fn from_unnormalized(layout: &[(&str, usize)], amps: Vec<C64>) -> Result<Self> {
        let sv = Self::unchecked(Self::build_layout(layout)?, amps)?;
        sv.renormalized()
    }

    /// One register holding `values`, zero-padded to a power of two and normalized.
    pub fn from_vector(name: &str, values: &[C64]) -> Result<Self> {
        let q = crate::linalg::qubits_for(values.len());
        let mut amps = vec![ZERO; 1 << q];
        amps[..values.len()].copy_from_slice(values);
        Self::from_unnormalized(&[(name, q)], amps)
    }

    /// Computational basis state with one value per register.
    pub fn basis(layout: &[(&str, usize)], values: &[usize]) -> Result<Self> {
        if layout.len() != values.len() {
            return Err(QmmError::Dimension("one value per register required".into()));
        }
        let layout = Self::build_layout(layout)?;
        let total: usize = layout.iter().map(|r| r.qubits).sum();
        let mut index = 0usize;
        for (r, &v) in layout.iter().zip(values) {
            if v >= r.dim() {
                return Err(QmmError::Dimension(format!("value {v} out of range for `{}`", r.name)));
            }
            index = (index << r.qubits) | v;
        }
        let mut amps = vec![ZERO; 1 << total];
        amps[index] = ONE;
        Self::unchecked(layout, amps)
    }

    /// The empty-layout scalar state.
    pub fn scalar() -> Self {
        Self { layout: vec![], amps: vec![ONE] }
    }

    fn build_layout(layout: &[(&str, usize)]) -> Result<Vec<Register>> {
        let mut out: Vec<Register> = Vec::with_capacity(layout.len());
        for &(name, qubits) in layout {
            if out.iter().any(|r| r.name == name) {
                return Err(QmmError::RegisterCollision(name.to_string()));
            }
            out.push(Register { name: name.to_string(), qubits });
        }
        Ok(out)
    }

    pub(crate) fn unchecked(layout: Vec<Register>, amps: Vec<C64>) -> Result<Self> {
        let total = check_budget(&layout)?;
        if amps.len() != 1usize << total {
            return Err(QmmError::Dimension(format!(
                "{} amplitudes for a {total}-qubit layout",
                amps.len()
            )));
        }
        Ok(Self { layout, amps })
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn layout(&self) -> &[Register] {
        &self.layout
    }

    pub fn layout_qubits(&self) -> Vec<(String, usize)> {
        self.layout.iter().map(|r| (r.name.clone(), r.qubits)).collect()
    }

    pub fn total_qubits(&self) -> usize {
        self.layout.iter().map(|r| r.qubits).sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }

    pub fn has_register(&self, name: &str) -> bool {
        self.layout.iter().any(|r| r.name == name)
    }

    pub fn register_dim(&self, name: &str) -> Result<usize> {
        Ok(self.layout[self.reg_index(name)?].dim())
    }

    fn reg_index(&self, name: &str) -> Result<usize> {
        self.layout.iter().position(|r| r.name == name).ok_or_else(|| QmmError::UnknownRegister(name.to_string()))
    }

    fn shift(&self, idx: usize) -> usize {
        self.layout[idx + 1..].iter().map(|r| r.qubits).sum()
    }

    fn pattern(&self, names: &[&str]) -> Result<Pattern> {
        let mut mask = 0usize;
        let mut offsets = vec![0usize];
        for (k, name) in names.iter().enumerate() {
            if names[..k].contains(name) {
                return Err(QmmError::RegisterCollision(name.to_string()));
            }
            let idx = self.reg_index(name)?;
            let (shift, dim) = (self.shift(idx), self.layout[idx].dim());
            mask |= (dim - 1) << shift;
            offsets = offsets.iter().flat_map(|&o| (0..dim).map(move |v| o | (v << shift))).collect();
        }
        Ok(Pattern { mask, offsets })
    }

    /// Combined value of `names` in a basis index (first name most significant).
    fn extractor(&self, names: &[&str]) -> Result<impl Fn(usize) -> usize> {
        let parts: Vec<(usize, usize)> = names
            .iter()
            .map(|n| self.reg_index(n).map(|i| (self.shift(i), self.layout[i].qubits)))
            .collect::<Result<_>>()?;
        Ok(move |x: usize| parts.iter().fold(0usize, |acc, &(s, q)| (acc << q) | ((x >> s) & ((1 << q) - 1))))
    }

    /// Returns a copy with a fresh register in |0⟩ appended to the layout.
    pub fn with_register(&self, name: &str, qubits: usize) -> Result<Self> {
        if self.has_register(name) {
            return Err(QmmError::RegisterCollision(name.to_string()));
        }
        let mut layout = self.layout.clone();
        layout.push(Register { name: name.to_string(), qubits });
        check_budget(&layout)?;
        let d = 1usize << qubits;
        let mut amps = vec![ZERO; self.amps.len() * d];
        for (k, a) in self.amps.iter().enumerate() {
            amps[k * d] = *a;
        }
        Self::unchecked(layout, amps)
    }

    /// Same amplitudes with registers permuted into `order` (all names required).
    pub fn reordered(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.layout.len() {
            return Err(QmmError::Dimension("reorder needs every register exactly once".into()));
        }
        let pat = self.pattern(order)?;
        let layout = order.iter().map(|n| self.layout[self.reg_index(n).unwrap()].clone()).collect();
        let amps = pat.offsets.iter().map(|&o| self.amps[o]).collect();
        Self::unchecked(layout, amps)
    }

    pub fn apply_unitary(&self, u: &DenseMatrix, targets: &[&str]) -> Result<Self> {
        let dev = u.unitarity_deviation();
        if dev > UNITARY_TOL {
            return Err(QmmError::NotUnitary(dev));
        }
        self.apply_trusted(u, targets)
    }

    /// Applies an operator already known to be unitary.
    pub(crate) fn apply_trusted(&self, u: &DenseMatrix, targets: &[&str]) -> Result<Self> {
        let amps = self.apply_linear_raw(u, targets)?;
        Ok(Self { layout: self.layout.clone(), amps })
    }

    /// Applies any square operator to the target registers, returning raw amplitudes.
    pub(crate) fn apply_linear_raw(&self, op: &DenseMatrix, targets: &[&str]) -> Result<Vec<C64>> {
        let pat = self.pattern(targets)?;
        if op.rows() != pat.offsets.len() || op.cols() != pat.offsets.len() {
            return Err(QmmError::Dimension(format!(
                "operator is {}x{}, targets span {}",
                op.rows(),
                op.cols(),
                pat.offsets.len()
            )));
        }
        let mut out = self.amps.clone();
        let d = pat.offsets.len();
        let mut buf = vec![ZERO; d];
        for base in (0..self.amps.len()).filter(|x| x & pat.mask == 0) {
            for (b, &o) in buf.iter_mut().zip(&pat.offsets) {
                *b = self.amps[base | o];
            }
            for (r, &o) in pat.offsets.iter().enumerate() {
                let row = &op.entries()[r * d..(r + 1) * d];
                out[base | o] = row.iter().zip(&buf).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    /// Applies `op_for(c)` to `targets` on the branch where `controls` hold value `c`;
    /// `None` leaves that branch untouched. Operators must be unitary.
    pub(crate) fn apply_select<'a, F>(&self, controls: &[&str], targets: &[&str], op_for: F) -> Result<Self>
    where
        F: Fn(usize) -> Option<&'a DenseMatrix>,
    {
        let pat = self.pattern(targets)?;
        let cpat = self.pattern(controls)?;
        if cpat.mask & pat.mask != 0 {
            return Err(QmmError::RegisterCollision("control and target overlap".into()));
        }
        let ctrl = self.extractor(controls)?;
        let d = pat.offsets.len();
        // Spectator qubits below every touched register form contiguous blocks.
        let touched = pat.mask | cpat.mask;
        let block = if touched == 0 { self.amps.len() } else { 1usize << touched.trailing_zeros() };
        let mut out = self.amps.clone();
        let mut acc = vec![ZERO; block];
        for base in (0..self.amps.len()).step_by(block).filter(|x| x & pat.mask == 0) {
            let Some(op) = op_for(ctrl(base)) else { continue };
            if op.rows() != d || op.cols() != d {
                return Err(QmmError::Dimension(format!("selected operator must be {d}x{d}")));
            }
            for (r, &o) in pat.offsets.iter().enumerate() {
                acc.fill(ZERO);
                for (&w, &oc) in op.entries()[r * d..(r + 1) * d].iter().zip(&pat.offsets) {
                    if w == ZERO {
                        continue;
                    }
                    let src = &self.amps[(base | oc)..(base | oc) + block];
                    for (a, x) in acc.iter_mut().zip(src) {
                        *a += w * x;
                    }
                }
                out[(base | o)..(base | o) + block].copy_from_slice(&acc);
            }
        }
        Ok(Self { layout: self.layout.clone(), amps: out })
    }

    /// Multiplies every amplitude by `phase(value of regs)`; unit-modulus factors only.
    pub(crate) fn apply_diagonal<F: Fn(usize) -> C64>(&self, regs: &[&str], phase: F) -> Result<Self> {
        let ext = self.extractor(regs)?;
        let amps = self.amps.iter().enumerate().map(|(x, a)| a * phase(ext(x))).collect();
        Ok(Self { layout: self.layout.clone(), amps })
    }

    /// Basis permutation |v⟩_regs ↦ |perm(v)⟩_regs; `perm` must be a bijection.
    pub(crate) fn apply_permutation<F: Fn(usize) -> usize>(&self, regs: &[&str], perm: F) -> Result<Self> {
        let pat = self.pattern(regs)?;
        let d = pat.offsets.len();
        let mut out = vec![ZERO; self.amps.len()];
        let mut seen = vec![false; d];
        for v in 0..d {
            let w = perm(v);
            if w >= d || std::mem::replace(&mut seen[w], true) {
                return Err(QmmError::Parameter("map is not a permutation".into()));
            }
        }
        for base in (0..self.amps.len()).filter(|x| x & pat.mask == 0) {
            for (v, &o) in pat.offsets.iter().enumerate() {
                out[base | pat.offsets[perm(v)]] = self.amps[base | o];
            }
        }
        Ok(Self { layout: self.layout.clone(), amps: out })
    }

    /// Quantum Fourier transform on one register: |y⟩ ↦ 2^{-t/2} Σ_z e^{±2πi yz/2^t}|z⟩,
    /// with the minus sign when `inverse`.
    pub fn fourier(&self, reg: &str, inverse: bool) -> Result<Self> {
        let pat = self.pattern(&[reg])?;
        let d = pat.offsets.len();
        let mut planner = FftPlanner::<f64>::new();
        // rustfft's forward transform carries e^{-2πi}, which is the inverse QFT.
        let fft: Arc<dyn rustfft::Fft<f64>> =
            if inverse { planner.plan_fft_forward(d) } else { planner.plan_fft_inverse(d) };
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = self.amps.clone();
        let mut buf = vec![ZERO; d];
        for base in (0..self.amps.len()).filter(|x| x & pat.mask == 0) {
            for (b, &o) in buf.iter_mut().zip(&pat.offsets) {
                *b = self.amps[base | o];
            }
            fft.process(&mut buf);
            for (b, &o) in buf.iter().zip(&pat.offsets) {
                out[base | o] = b * scale;
            }
        }
        Ok(Self { layout: self.layout.clone(), amps: out })
    }

    /// Hadamard on every qubit of a register, as in-place butterflies.
    pub fn hadamard_all(&self, reg: &str) -> Result<Self> {
        let idx = self.reg_index(reg)?;
        let (shift, q) = (self.shift(idx), self.layout[idx].qubits);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut out = self.amps.clone();
        for bit in shift..shift + q {
            let m = 1usize << bit;
            for chunk in out.chunks_mut(2 * m) {
                let (lo, hi) = chunk.split_at_mut(m);
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = (x + y) * s;
                    *b = (x - y) * s;
                }
            }
        }
        Ok(Self { layout: self.layout.clone(), amps: out })
    }

    /// Outcome probabilities of one register.
    pub fn probabilities(&self, reg: &str) -> Result<Vec<f64>> {
        let ext = self.extractor(&[reg])?;
        let mut p = vec![0.0; self.register_dim(reg)?];
        for (x, a) in self.amps.iter().enumerate() {
            p[ext(x)] += a.norm_sqr();
        }
        Ok(p)
    }

    /// Projects onto `reg = outcome` without renormalizing; the register is removed.
    pub(crate) fn project_raw(&self, reg: &str, outcome: usize) -> Result<(Vec<Register>, Vec<C64>)> {
        let idx = self.reg_index(reg)?;
        let r = &self.layout[idx];
        if outcome >= r.dim() {
            return Err(QmmError::Dimension(format!("outcome {outcome} out of range for `{reg}`")));
        }
        let shift = self.shift(idx);
        let low = (1usize << shift) - 1;
        let kept = self.amps.len() >> r.qubits;
        let amps = (0..kept)
            .map(|k| {
                let hi = k >> shift;
                self.amps[(((hi << r.qubits) | outcome) << shift) | (k & low)]
            })
            .collect();
        let mut layout = self.layout.clone();
        layout.remove(idx);
        Ok((layout, amps))
    }

    pub fn postselect(&self, reg: &str, outcome: usize) -> Result<PreparedState> {
        let (layout, amps) = self.project_raw(reg, outcome)?;
        let p: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if p <= 0.0 {
            return Err(QmmError::ZeroProbability { register: reg.to_string(), outcome });
        }
        let s = p.sqrt();
        let state = Self::unchecked(layout, amps.into_iter().map(|a| a / s).collect())?;
        let mut ledger = CostLedger::default();
        ledger.postselect_probability = p;
        Ok(PreparedState { state, success_probability: p, ledger })
    }

    /// Postselects several registers in turn; probabilities multiply.
    pub fn postselect_all(&self, outcomes: &[(&str, usize)]) -> Result<PreparedState> {
        let mut cur = PreparedState::certain(self.clone());
        for &(reg, v) in outcomes {
            let next = cur.state.postselect(reg, v)?;
            cur.success_probability *= next.success_probability;
            cur.state = next.state;
        }
        cur.ledger.postselect_probability = cur.success_probability;
        Ok(cur)
    }

    pub(crate) fn renormalized(&self) -> Result<Self> {
        let n = norm(&self.amps);
        if n == 0.0 {
            return Err(QmmError::ZeroInput("zero state".into()));
        }
        Ok(Self { layout: self.layout.clone(), amps: self.amps.iter().map(|a| a / n).collect() })
    }

    /// ⟨self|other⟩ for identical layouts.
    pub fn overlap(&self, other: &Self) -> Result<C64> {
        if self.layout != other.layout {
            return Err(QmmError::Dimension("layouts differ".into()));
        }
        Ok(crate::linalg::inner(&self.amps, &other.amps))
    }

    /// Draws `shots` outcomes of one register from a seeded generator. Demonstration only.
    pub fn sample(&self, reg: &str, shots: usize, seed: u64) -> Result<Vec<usize>> {
        let p = self.probabilities(reg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; p.len()];
        for _ in 0..shots {
            let mut r: f64 = rng.gen();
            let mut k = 0;
            while k + 1 < p.len() && r >= p[k] {
                r -= p[k];
                k += 1;
            }
            counts[k] += 1;
        }
        Ok(counts)
    }
}

/// Overlap magnitude and global-phase-aligned distance √(2(1−|⟨a|b⟩|)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub overlap: f64,
    pub distance: f64,
}

pub fn fidelity(a: &Statevector, b: &Statevector) -> Result<Fidelity> {
    let ov = a.overlap(b)?.norm().min(1.0);
    Ok(Fidelity { overlap: ov, distance: (2.0 * (1.0 - ov)).max(0.0).sqrt() })
}

/// ‖a − b‖₂ over the amplitudes, without phase alignment.
pub fn amplitude_distance(a: &Statevector, b: &Statevector) -> f64 {
    a.amps.iter().zip(&b.amps).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn tensor(a: &Statevector, b: &Statevector) -> Result<Statevector> {
    if let Some(r) = b.layout.iter().find(|r| a.has_register(&r.name)) {
        return Err(QmmError::RegisterCollision(r.name.clone()));
    }
    let mut layout = a.layout.clone();
    layout.extend(b.layout.iter().cloned());
    check_budget(&layout)?;
    let amps = a.amps.iter().flat_map(|x| b.amps.iter().map(move |y| x * y)).collect();
    Statevector::unchecked(layout, amps)
}

/// Counters standing in for run-time claims. Counters only grow within a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Applications of input-state preparation unitaries (one T_in each).
    pub oracle_calls: u64,
    pub controlled_oracle_calls: u64,
    pub phase_bits_used: u32,
    pub amplification_rounds: u64,
    pub postselect_probability: f64,
    /// Applications of e^{iHt} in Hamiltonian-based routines.
    pub hamiltonian_sim_units: u64,
    /// Classical entries touched by norm precomputation.
    pub classical_entries: u64,
    /// Named closed-form cost models evaluated on the instance.
    pub models: BTreeMap<String, f64>,
}

impl Default for CostLedger {
    fn default() -> Self {
        Self {
            oracle_calls: 0,
            controlled_oracle_calls: 0,
            phase_bits_used: 0,
            amplification_rounds: 0,
            postselect_probability: 1.0,
            hamiltonian_sim_units: 0,
            classical_entries: 0,
            models: BTreeMap::new(),
        }
    }
}

impl CostLedger {
    pub fn charge_oracle(&mut self, calls: u64) {
        self.oracle_calls += calls;
    }

    pub fn charge_controlled(&mut self, calls: u64) {
        self.controlled_oracle_calls += calls;
    }

    pub fn note_phase_bits(&mut self, t: u32) {
        self.phase_bits_used = self.phase_bits_used.max(t);
    }

    pub fn record_model(&mut self, name: &str, value: f64) {
        self.models.insert(name.to_string(), value);
    }

    /// Total oracle work: plain plus controlled calls.
    pub fn total_calls(&self) -> u64 {
        self.oracle_calls + self.controlled_oracle_calls
    }

    /// Counters of `rounds` repetitions of this run. Models and phase bits are per-run and stay put.
    pub fn repeated(&self, rounds: u64) -> CostLedger {
        CostLedger {
            oracle_calls: self.oracle_calls * rounds,
            controlled_oracle_calls: self.controlled_oracle_calls * rounds,
            hamiltonian_sim_units: self.hamiltonian_sim_units * rounds,
            amplification_rounds: self.amplification_rounds * rounds,
            ..self.clone()
        }
    }

    /// Adds counters from an independent sub-run; models are summed by name.
    pub fn absorb(&mut self, other: &CostLedger) {
        self.oracle_calls += other.oracle_calls;
        self.controlled_oracle_calls += other.controlled_oracle_calls;
        self.phase_bits_used = self.phase_bits_used.max(other.phase_bits_used);
        self.amplification_rounds += other.amplification_rounds;
        self.hamiltonian_sim_units += other.hamiltonian_sim_units;
        self.classical_entries += other.classical_entries;
        for (k, v) in &other.models {
            *self.models.entry(k.clone()).or_insert(0.0) += v;
        }
    }
}

/// Adds ceil(1/√p) amplification rounds and returns them. The π/4 constant is not applied.
pub fn charge_amplification(ledger: &mut CostLedger, p: f64) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0 + 1e-12) {
        return Err(QmmError::InvalidProbability(p));
    }
    let x = 1.0 / p.min(1.0).sqrt();
    // Absorb rounding so that p = 1/k² charges exactly k.
    let rounds = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() } as u64;
    ledger.amplification_rounds += rounds;
    Ok(rounds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedState {
    pub state: Statevector,
    pub success_probability: f64,
    pub ledger: CostLedger,
}

impl PreparedState {
    pub fn certain(state: Statevector) -> Self {
        Self { state, success_probability: 1.0, ledger: CostLedger::default() }
    }
}

/// Outcome of running true Grover iterations against the ceil(1/√p) charge.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplificationCheck {
    pub charged_rounds: u64,
    /// Circuit applications (initial preparation included) until the success probability peaks.
    pub grover_rounds: u64,
    pub peak_probability: f64,
}

/// Runs amplitude amplification on a small state, marking `reg = outcome` as success.
pub fn verify_amplification(state: &Statevector, reg: &str, outcome: usize) -> Result<AmplificationCheck> {
    if state.total_qubits() > GROVER_CHECK_MAX_QUBITS {
        return Err(QmmError::QubitBudget { requested: state.total_qubits(), cap: GROVER_CHECK_MAX_QUBITS });
    }
    let good = state.extractor(&[reg])?;
    let p0: f64 = state.amps.iter().enumerate().filter(|(x, _)| good(*x) == outcome).map(|(_, a)| a.norm_sqr()).sum();
    let mut ledger = CostLedger::default();
    let charged = charge_amplification(&mut ledger, p0)?;
    let psi = state.amps.clone();
    let mut cur = psi.clone();
    let success = |v: &[C64]| -> f64 {
        v.iter().enumerate().filter(|(x, _)| good(*x) == outcome).map(|(_, a)| a.norm_sqr()).sum()
    };
    let (mut best, mut best_k, mut prev) = (p0, 0u64, p0);
    for k in 1..=(4 * charged + 4) {
        // Q = −S_ψ S_good: flip the good branch, then reflect about ψ.
        for (x, a) in cur.iter_mut().enumerate() {
            if good(x) == outcome {
                *a = -*a;
            }
        }
        let ov = crate::linalg::inner(&psi, &cur);
        for (a, p) in cur.iter_mut().zip(&psi) {
            *a = 2.0 * ov * p - *a;
        }
        let s = success(&cur);
        if s > best + 1e-12 {
            best = s;
            best_k = k;
        }
        if s < prev - 1e-12 && best > 0.5 {
            break;
        }
        prev = s;
    }
    Ok(AmplificationCheck { charged_rounds: charged, grover_rounds: best_k + 1, peak_probability: best })
}
