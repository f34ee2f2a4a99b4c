//! Amplitude encoding of classical vectors: direct synthesis, the Hamiltonian-rotation method
//! and its sparse, dyadic and sign-shift refinements, plus linear combinations of prepared states.

use serde::{Deserialize, Serialize};

use crate::error::{QmmError, Result};
use crate::linalg::{norm, qubits_for, unitary_from_first_column, DenseMatrix, C64, ONE, ZERO};
use crate::sim::{amplitude_distance, charge_amplification, CostLedger, PreparedState, Statevector};

pub const DATA_REG: &str = "k";
const COMBINE_REG: &str = "w";
const ROTATION_REG: &str = "a";
/// Constant c of the log^c factor in the unitary-synthesis gate count.
pub const SYNTHESIS_LOG_POWER: f64 = 2.0;

/// A real vector with its support and magnitude range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorSpec {
    pub values: Vec<f64>,
    pub support: Vec<usize>,
    pub max_abs: f64,
    pub min_abs_nonzero: f64,
    /// max/min magnitude over the support, at least 1.
    pub kappa_x: f64,
}

impl VectorSpec {
    /// Support by exact comparison with zero.
    pub fn new(values: &[f64]) -> Result<Self> {
        Self::with_tolerance(values, 0.0)
    }

    /// Entries with |x_k| ≤ tol are treated as zero and dropped from the values.
    pub fn with_tolerance(values: &[f64], tol: f64) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(QmmError::Parameter("vector entries must be finite".into()));
        }
        let values: Vec<f64> = values.iter().map(|&x| if x.abs() <= tol { 0.0 } else { x }).collect();
        let support: Vec<usize> = (0..values.len()).filter(|&k| values[k] != 0.0).collect();
        if support.is_empty() {
            return Err(QmmError::ZeroInput("vector has empty support".into()));
        }
        let mags = support.iter().map(|&k| values[k].abs());
        let max_abs = mags.clone().fold(0.0, f64::max);
        let min_abs_nonzero = mags.fold(f64::INFINITY, f64::min);
        Ok(Self { values, support, max_abs, min_abs_nonzero, kappa_x: max_abs / min_abs_nonzero })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn qubits(&self) -> usize {
        qubits_for(self.values.len())
    }

    /// |x⟩ on [`DATA_REG`], zero-padded to a power of two.
    pub fn target_state(&self) -> Result<Statevector> {
        Statevector::from_vector(DATA_REG, &self.complex())
    }

    fn complex(&self) -> Vec<C64> {
        self.values.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    fn restricted(&self, keep: impl Fn(usize) -> bool) -> Vec<f64> {
        self.values.iter().enumerate().map(|(k, &x)| if keep(k) { x } else { 0.0 }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrepMethod {
    Direct,
    Hamiltonian,
    SparseKnown,
    SparseUnknown,
    Dyadic,
    SignShift,
}

/// Parameters of one Hamiltonian-rotation run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianRun {
    pub kappa_f: f64,
    /// Upper end ε₁ of the angle window ε₀ ≤ |f(k)t| ≤ ε₁.
    pub epsilon1: f64,
    pub epsilon0: f64,
    pub time: f64,
    /// Z t², the small-angle estimate of the success probability.
    pub small_angle_probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepReport {
    pub method: PrepMethod,
    pub result: PreparedState,
    pub target: Statevector,
    /// Upper bound on `realized_distance`.
    pub target_fidelity_bound: f64,
    pub realized_distance: f64,
    pub hamiltonian: Option<HamiltonianRun>,
}

impl PrepReport {
    pub fn within_bound(&self) -> bool {
        self.realized_distance <= self.target_fidelity_bound
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(QmmError::Parameter(format!("accuracy must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// Exact |x⟩ from the unitary whose first column is |x⟩.
pub fn synthesize_direct(x: &VectorSpec) -> Result<PreparedState> {
    let target = x.target_state()?;
    let u = unitary_from_first_column(target.amplitudes())?;
    let q = target.total_qubits();
    let state = Statevector::basis(&[(DATA_REG, q)], &[0])?.apply_trusted(&u, &[DATA_REG])?;
    let mut ledger = CostLedger::default();
    ledger.charge_oracle(1);
    ledger.classical_entries = x.len() as u64;
    let n = (1usize << q) as f64;
    let lg = n.log2().max(1.0);
    ledger.record_model("direct_gate_count", n * n * lg * lg);
    Ok(PreparedState { state, success_probability: 1.0, ledger })
}

/// Postselected |1⟩ branch of H·(controlled e^{±iHt})·H on (a, base) with H = diag(f):
/// amplitudes b_k sin(f(k)t), with the fixed phase i removed by S† on the ancilla.
fn rotation_branch(f: &[f64], base: &Statevector, time: f64) -> Result<(Statevector, f64)> {
    let reg = base.layout()[0].name.clone();
    let d = base.amplitudes().len();
    let q = base.total_qubits();
    let mut amps = vec![ZERO; 2 * d];
    amps[..d].copy_from_slice(base.amplitudes());
    let s = Statevector::new(&[(ROTATION_REG, 1), (reg.as_str(), q)], amps)?;
    let s = s.hadamard_all(ROTATION_REG)?;
    let s = s.apply_diagonal(&[ROTATION_REG, reg.as_str()], |v| {
        let (a, k) = (v >> q, v & (d - 1));
        let sign = if a == 0 { 1.0 } else { -1.0 };
        C64::from_polar(1.0, sign * f[k] * time)
    })?;
    let s = s.hadamard_all(ROTATION_REG)?;
    let s = s.apply_diagonal(&[ROTATION_REG], |a| if a == 1 { C64::new(0.0, -1.0) } else { ONE })?;
    let out = s.postselect(ROTATION_REG, 1)?;
    Ok((out.state, out.success_probability))
}

fn single_register(base: &Statevector) -> Result<()> {
    if base.layout().len() != 1 {
        return Err(QmmError::Dimension("base state must hold exactly one register".into()));
    }
    Ok(())
}

/// (1/√Z) Σ f(k) b_k |k⟩ from Σ b_k |k⟩ by a small-angle rotation.
///
/// t = ε₁/max|f| with ε₁ = eps/√κ(f), so ε₀ = ε₁/κ(f). Amplification is charged as 1/ε₀.
pub fn prep_hamiltonian(f: &[f64], base: &Statevector, eps: f64) -> Result<PrepReport> {
    hamiltonian_run(f, base, eps, false)
}

fn hamiltonian_run(f: &[f64], base: &Statevector, eps: f64, allow_zeros: bool) -> Result<PrepReport> {
    check_eps(eps)?;
    single_register(base)?;
    let d = base.amplitudes().len();
    if f.len() > d {
        return Err(QmmError::Dimension(format!("{} function values for a base of dimension {d}", f.len())));
    }
    let mut fv = f.to_vec();
    fv.resize(d, 0.0);
    let b = base.amplitudes();
    let populated: Vec<usize> = (0..d).filter(|&k| b[k].norm() > 0.0).collect();
    if let Some(&k) = populated.iter().find(|&&k| fv[k] == 0.0) {
        if !allow_zeros {
            return Err(QmmError::Parameter(format!("f({k}) = 0 on the support of the base state")));
        }
    }
    let mags: Vec<f64> = populated.iter().map(|&k| fv[k].abs()).filter(|m| *m > 0.0).collect();
    if mags.is_empty() {
        return Err(QmmError::ZeroInput("f vanishes on the support of the base state".into()));
    }
    let fmax = mags.iter().copied().fold(0.0, f64::max);
    let fmin = mags.iter().copied().fold(f64::INFINITY, f64::min);
    let kappa_f = fmax / fmin;
    let eps1 = eps / kappa_f.sqrt();
    let time = eps1 / fmax;
    if fmax * time >= 1.0 {
        return Err(QmmError::TimeOverflow(fmax * time));
    }
    let eps0 = eps1 / kappa_f;

    let (state, p) = rotation_branch(&fv, base, time)?;
    let target_amps: Vec<C64> = (0..d).map(|k| b[k] * fv[k]).collect();
    let z = norm(&target_amps).powi(2);
    let target = Statevector::from_unnormalized(&base.layout_qubits().iter().map(|(n, q)| (n.as_str(), *q)).collect::<Vec<_>>(), target_amps)?;

    let mut attempt = CostLedger::default();
    attempt.charge_oracle(1);
    attempt.hamiltonian_sim_units = 1;
    let mut ledger = attempt.clone();
    // Zero entries of f shrink P by the populated fraction z/n.
    let support_fraction = mags.len() as f64 / populated.len() as f64;
    let mut probe = CostLedger::default();
    let rounds = charge_amplification(&mut probe, eps0 * eps0 * support_fraction)?;
    ledger = ledger.repeated(rounds);
    ledger.amplification_rounds = rounds;
    ledger.postselect_probability = p;
    let n = d as f64;
    ledger.record_model("hamiltonian_model", kappa_f.powf(1.5) / eps);
    ledger.record_model("sparse_model", kappa_f.powf(1.5) * n.log2().max(1.0) / eps / support_fraction.sqrt());

    Ok(PrepReport {
        method: PrepMethod::Hamiltonian,
        realized_distance: amplitude_distance(&state, &target),
        result: PreparedState { state, success_probability: p, ledger },
        target,
        target_fidelity_bound: (kappa_f / 3.0).sqrt() * eps1,
        hamiltonian: Some(HamiltonianRun { kappa_f, epsilon1: eps1, epsilon0: eps0, time, small_angle_probability: z * time * time }),
    })
}

/// Uniform superposition over `indices` in a register of `qubits`.
fn uniform_over(indices: &[usize], qubits: usize) -> Result<Statevector> {
    let mut amps = vec![ZERO; 1 << qubits];
    let a = 1.0 / (indices.len() as f64).sqrt();
    for &k in indices {
        amps[k] = C64::new(a, 0.0);
    }
    Statevector::new(&[(DATA_REG, qubits)], amps)
}

/// |x⟩ with f = x over a uniform base. With `support_known` the base covers the support only;
/// otherwise it covers all n entries and amplification pays the extra √(n/z).
pub fn prep_sparse(x: &VectorSpec, eps: f64, support_known: bool) -> Result<PrepReport> {
    let q = x.qubits();
    let base = if support_known {
        uniform_over(&x.support, q)?
    } else {
        uniform_over(&(0..x.len()).collect::<Vec<_>>(), q)?
    };
    let mut r = hamiltonian_run(&x.values, &base, eps, !support_known)?;
    r.method = if support_known { PrepMethod::SparseKnown } else { PrepMethod::SparseUnknown };
    r.target = x.target_state()?;
    r.realized_distance = amplitude_distance(&r.result.state, &r.target);
    Ok(r)
}

/// Band index j ≥ 1 of magnitude m for bands [2^{j−1}x₀, 2^j x₀), the top band closed.
fn band_of(m: f64, x0: f64, bands: usize) -> usize {
    let j = (m / x0).log2().floor() as i64 + 1;
    j.clamp(1, bands as i64) as usize
}

/// Decomposition x = Σ_j y_j by magnitude band; empty bands are dropped.
pub fn dyadic_bands(x: &VectorSpec) -> Vec<Vec<f64>> {
    let q = x.kappa_x.log2().floor() as usize + 1;
    let x0 = x.min_abs_nonzero;
    (1..=q)
        .map(|j| x.restricted(|k| x.values[k] != 0.0 && band_of(x.values[k].abs(), x0, q) == j))
        .filter(|y| y.iter().any(|v| *v != 0.0))
        .collect()
}

/// Each band has κ ≤ 2, prepared by the sparse method and combined with weights ‖y_j‖.
pub fn prep_dyadic(x: &VectorSpec, eps: f64) -> Result<PrepReport> {
    check_eps(eps)?;
    let bands = dyadic_bands(x);
    let xn = x.norm();
    let lambdas: Vec<f64> = bands.iter().map(|y| norm_real(y) / xn).collect();
    let lsum: f64 = lambdas.iter().sum();
    // Output error ≤ 2 Σ λ_j δ_j; each band gets δ_j ≤ eps/(2 Σ λ).
    let band_eps = (eps / (2.0 * lsum)).min(0.5);
    let mut parts = Vec::with_capacity(bands.len());
    let mut worst: f64 = 0.0;
    for y in &bands {
        let r = prep_sparse(&VectorSpec::new(y)?, band_eps, true)?;
        worst = worst.max(r.target_fidelity_bound);
        parts.push(r.result);
    }
    let result = lcu_combine(&parts, &lambdas)?;
    let target = x.target_state()?;
    let mut result = result;
    let qb = (bands.len() as f64).max(2.0);
    result.ledger.record_model(
        "dyadic_model",
        qb.powf(2.5) * qb.log2().max(1.0).powi(2) * (qb * qb / eps).ln().max(1.0).powf(SYNTHESIS_LOG_POWER) * (x.len() as f64).log2().max(1.0) / eps,
    );
    Ok(PrepReport {
        method: PrepMethod::Dyadic,
        realized_distance: amplitude_distance(&result.state, &target),
        result,
        target,
        target_fidelity_bound: 2.0 * lsum * worst,
        hamiltonian: None,
    })
}

fn norm_real(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The shift used by the sign-shift method, restricted to the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignShift {
    pub shift: f64,
    /// y = M·sign(x) on the support.
    pub y: Vec<f64>,
    /// z = x + y.
    pub z: Vec<f64>,
    /// (M + max|x|)/(M + min|x|).
    pub d: f64,
}

pub fn sign_shift(x: &VectorSpec) -> SignShift {
    let m = x.max_abs;
    let y: Vec<f64> = x.values.iter().map(|&v| if v == 0.0 { 0.0 } else { m * v.signum() }).collect();
    let z = x.values.iter().zip(&y).map(|(a, b)| a + b).collect();
    SignShift { shift: m, y, z, d: (m + x.max_abs) / (m + x.min_abs_nonzero) }
}

/// |x⟩ = λ|z⟩ − μ|y⟩ by the two-state Hadamard-test combination; |y⟩ is exact, |z⟩ has κ ≤ 2.
pub fn prep_signshift(x: &VectorSpec, eps: f64) -> Result<PrepReport> {
    check_eps(eps)?;
    let sh = sign_shift(x);
    let xn = x.norm();
    let (lambda, mu) = (norm_real(&sh.z) / xn, norm_real(&sh.y) / xn);
    let yspec = VectorSpec::new(&sh.y)?;
    let y_state = synthesize_direct(&yspec)?;
    // Output error ≤ 2λδ_z.
    let z_eps = (eps / (2.0 * lambda)).min(0.5);
    let zr = prep_sparse(&VectorSpec::new(&sh.z)?, z_eps, true)?;
    let mut result = hadamard_combine(&zr.result, &y_state, lambda, mu)?;
    let n = (x.len() as f64).log2().max(1.0);
    result.ledger.record_model("signshift_hadamard", (lambda * lambda + mu * mu).sqrt() * n / eps);
    result.ledger.record_model("signshift_quadratic", n / (eps * eps));
    let target = x.target_state()?;
    Ok(PrepReport {
        method: PrepMethod::SignShift,
        realized_distance: amplitude_distance(&result.state, &target),
        result,
        target,
        target_fidelity_bound: 2.0 * lambda * zr.target_fidelity_bound,
        hamiltonian: None,
    })
}

fn check_layouts(states: &[PreparedState]) -> Result<Vec<(String, usize)>> {
    let first = states.first().ok_or_else(|| QmmError::Parameter("nothing to combine".into()))?;
    let layout = first.state.layout_qubits();
    if states.iter().any(|s| s.state.layout_qubits() != layout) {
        return Err(QmmError::Dimension("combined states must share one layout".into()));
    }
    Ok(layout)
}

/// Per-attempt cost of a select over preparations: one branch runs, charged at the costliest.
fn select_cost(states: &[PreparedState]) -> CostLedger {
    let mut worst = CostLedger::default();
    for s in states {
        if s.ledger.total_calls() + s.ledger.hamiltonian_sim_units > worst.total_calls() + worst.hamiltonian_sim_units {
            worst = s.ledger.clone();
        }
    }
    worst.models.clear();
    worst
}

fn amplify_combination(attempt: CostLedger, p: f64) -> Result<CostLedger> {
    let mut probe = CostLedger::default();
    let rounds = charge_amplification(&mut probe, p)?;
    let mut ledger = attempt.repeated(rounds);
    ledger.amplification_rounds += rounds;
    ledger.postselect_probability = p;
    Ok(ledger)
}

/// ∝ Σ w_i|s_i⟩ by prepare–select–unprepare on an index register, postselected on |0⟩.
/// Success probability ‖Σ w_i s_i‖²/(Σ|w_i|)².
pub fn lcu_combine(states: &[PreparedState], weights: &[f64]) -> Result<PreparedState> {
    let layout = check_layouts(states)?;
    if weights.len() != states.len() {
        return Err(QmmError::Dimension("one weight per state".into()));
    }
    let total: f64 = weights.iter().map(|w| w.abs()).sum();
    if !(total > 0.0) {
        return Err(QmmError::ZeroInput("all weights are zero".into()));
    }
    let wq = qubits_for(states.len());
    let wdim = 1usize << wq;
    let mut root = vec![ZERO; wdim];
    for (r, w) in root.iter_mut().zip(weights) {
        *r = C64::new((w.abs() / total).sqrt(), 0.0);
    }
    let v = unitary_from_first_column(&root)?;
    let names: Vec<&str> = layout.iter().map(|(n, _)| n.as_str()).collect();
    let mut full: Vec<(&str, usize)> = vec![(COMBINE_REG, wq)];
    full.extend(layout.iter().map(|(n, q)| (n.as_str(), *q)));
    let ddim = states[0].state.amplitudes().len();
    let mut preps = Vec::with_capacity(wdim);
    for k in 0..wdim {
        let u = match states.get(k) {
            Some(s) => {
                let sign = if weights[k] < 0.0 { -1.0 } else { 1.0 };
                unitary_from_first_column(s.state.amplitudes())?.scaled(C64::new(sign, 0.0))
            }
            None => DenseMatrix::identity(ddim),
        };
        preps.push(u);
    }
    let mut amps = vec![ZERO; wdim * ddim];
    amps[0] = ONE;
    let s = Statevector::new(&full, amps)?;
    let s = s.apply_trusted(&v, &[COMBINE_REG])?;
    let s = s.apply_select(&[COMBINE_REG], &names, |k| Some(&preps[k]))?;
    let s = s.apply_trusted(&v.adjoint(), &[COMBINE_REG])?;
    let (_, raw) = s.project_raw(COMBINE_REG, 0)?;
    let p: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
    if p <= 1e-24 {
        return Err(QmmError::Cancellation);
    }
    let state = Statevector::new(&layout.iter().map(|(n, q)| (n.as_str(), *q)).collect::<Vec<_>>(), raw.iter().map(|z| z / p.sqrt()).collect())?;
    let mut attempt = select_cost(states);
    attempt.amplification_rounds = 0;
    // Index-state preparation and its inverse.
    attempt.charge_oracle(2);
    let ledger = amplify_combination(attempt, p)?;
    Ok(PreparedState { state, success_probability: p, ledger })
}

/// (λ|0⟩|z⟩ + μ|1⟩|y⟩)/√(λ²+μ²), Hadamard on the index, postselect |1⟩: ∝ λ|z⟩ − μ|y⟩ with
/// probability ‖λz − μy‖²/2(λ² + μ²).
pub fn hadamard_combine(first: &PreparedState, second: &PreparedState, lambda: f64, mu: f64) -> Result<PreparedState> {
    let pair = [first.clone(), second.clone()];
    let layout = check_layouts(&pair)?;
    let r = (lambda * lambda + mu * mu).sqrt();
    if !(r > 0.0) {
        return Err(QmmError::ZeroInput("both weights are zero".into()));
    }
    let ddim = first.state.amplitudes().len();
    let mut amps = Vec::with_capacity(2 * ddim);
    amps.extend(first.state.amplitudes().iter().map(|z| z * (lambda / r)));
    amps.extend(second.state.amplitudes().iter().map(|z| z * (mu / r)));
    let mut full: Vec<(&str, usize)> = vec![(COMBINE_REG, 1)];
    full.extend(layout.iter().map(|(n, q)| (n.as_str(), *q)));
    let s = Statevector::new(&full, amps)?.hadamard_all(COMBINE_REG)?;
    let (_, raw) = s.project_raw(COMBINE_REG, 1)?;
    let p: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
    if p <= 1e-24 {
        return Err(QmmError::Cancellation);
    }
    let state = Statevector::new(&layout.iter().map(|(n, q)| (n.as_str(), *q)).collect::<Vec<_>>(), raw.iter().map(|z| z / p.sqrt()).collect())?;
    let mut attempt = select_cost(&pair);
    attempt.amplification_rounds = 0;
    // The weighted index state is one more preparation.
    attempt.charge_oracle(1);
    let ledger = amplify_combination(attempt, p)?;
    Ok(PreparedState { state, success_probability: p, ledger })
}
