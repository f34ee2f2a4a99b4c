//! Phase estimation, the Grover rotation, even-function tagging and controlled value rotation.
//!
//! Phase labels use two's-complement wrap: the eigenphase −φ lands on 2^t − y.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{QmmError, Result};
use crate::linalg::{inner, norm, DenseMatrix, C64, ONE, ZERO};
use crate::sim::{CostLedger, Statevector};

pub const GUARD_BITS: u32 = 2;
pub const MAX_PHASE_BITS: u32 = 20;
/// Branches lighter than this are treated as unpopulated by value checks.
pub const POPULATED_TOL: f64 = 1e-20;

/// Smallest t with π/2^t ≤ eps.
pub fn bits_for_epsilon(eps: f64) -> Result<u32> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(QmmError::Parameter(format!("accuracy must be positive, got {eps}")));
    }
    Ok((PI / eps).log2().ceil().max(1.0) as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phase_bits: u32,
    /// Target accuracy the bits were derived from, or π/2^t when set directly.
    pub epsilon: f64,
    /// Failure probability δ; vacuous under exact simulation.
    pub confidence: f64,
}

impl PhaseConfig {
    /// t = ceil(log2(π/ε)) plus [`GUARD_BITS`].
    pub fn from_epsilon(eps: f64) -> Result<Self> {
        Self::from_epsilon_guarded(eps, GUARD_BITS)
    }

    pub fn from_epsilon_guarded(eps: f64, guard: u32) -> Result<Self> {
        let t = bits_for_epsilon(eps)? + guard;
        Self::check_bits(t)?;
        Ok(Self { phase_bits: t, epsilon: eps, confidence: 0.05 })
    }

    pub fn with_bits(t: u32) -> Result<Self> {
        Self::check_bits(t)?;
        Ok(Self { phase_bits: t, epsilon: PI / f64::from(1u32 << t), confidence: 0.05 })
    }

    fn check_bits(t: u32) -> Result<()> {
        if t == 0 || t > MAX_PHASE_BITS {
            return Err(QmmError::Parameter(format!("phase bits must lie in 1..={MAX_PHASE_BITS}, got {t}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.phase_bits
    }

    /// π/2^t: angular resolution of one phase label.
    pub fn grid_epsilon(&self) -> f64 {
        PI / self.dim() as f64
    }

    /// Controlled applications of the unitary charged per estimation pass.
    pub fn controlled_calls(&self) -> u64 {
        (1u64 << self.phase_bits) - 1
    }
}

/// Label y read as a signed integer in [−2^{t−1}, 2^{t−1}).
pub fn signed_label(y: usize, t: u32) -> i64 {
    let n = 1i64 << t;
    let y = y as i64;
    if y >= n / 2 {
        y - n
    } else {
        y
    }
}

/// Probability of label y for eigenphase e^{2πiφ} under exact t-bit estimation.
pub fn qpe_kernel(phi: f64, y: usize, t: u32) -> f64 {
    let n = (1u64 << t) as f64;
    let delta = phi - y as f64 / n;
    let s = (PI * delta).sin();
    if s.abs() < 1e-15 {
        return 1.0;
    }
    ((PI * n * delta).sin() / (n * s)).powi(2)
}

/// A unitary, or a family of unitaries selected by control registers, acting on `targets`.
#[derive(Clone, Debug)]
pub struct UnitaryFamily {
    pub controls: Vec<String>,
    pub targets: Vec<String>,
    /// One operator per combined control value (first control most significant).
    pub ops: Vec<DenseMatrix>,
    /// Input-oracle calls spent by one application.
    pub calls_per_application: u64,
}

impl UnitaryFamily {
    pub fn single(u: DenseMatrix, targets: &[&str], calls_per_application: u64) -> Self {
        Self {
            controls: vec![],
            targets: targets.iter().map(|s| s.to_string()).collect(),
            ops: vec![u],
            calls_per_application,
        }
    }

    pub fn selected(controls: &[&str], targets: &[&str], ops: Vec<DenseMatrix>, calls_per_application: u64) -> Self {
        Self {
            controls: controls.iter().map(|s| s.to_string()).collect(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
            ops,
            calls_per_application,
        }
    }

    /// u^{2^k} for k < t, by repeated squaring, per family member.
    fn powers(&self, t: u32) -> Result<Vec<Vec<DenseMatrix>>> {
        self.ops
            .iter()
            .map(|u| {
                let mut out = Vec::with_capacity(t as usize);
                let mut cur = u.clone();
                for _ in 0..t {
                    let next = cur.matmul(&cur)?;
                    out.push(std::mem::replace(&mut cur, next));
                }
                Ok(out)
            })
            .collect()
    }

    fn check(&self, s: &Statevector) -> Result<()> {
        let mut count = 1usize;
        for c in &self.controls {
            count *= s.register_dim(c)?;
        }
        if count != self.ops.len() {
            return Err(QmmError::Dimension(format!("{} operators for {count} control values", self.ops.len())));
        }
        Ok(())
    }

    fn apply_powers(&self, s: &Statevector, phase_reg: &str, t: u32, pows: &[Vec<DenseMatrix>], k: u32) -> Result<Statevector> {
        let mut controls: Vec<&str> = self.controls.iter().map(String::as_str).collect();
        controls.push(phase_reg);
        let targets: Vec<&str> = self.targets.iter().map(String::as_str).collect();
        let mask = (1usize << t) - 1;
        s.apply_select(&controls, &targets, |c| {
            let y = c & mask;
            ((y >> k) & 1 == 1).then(|| &pows[c >> t][k as usize])
        })
    }
}

/// Textbook phase estimation: Hadamards, controlled u^{2^k}, inverse Fourier transform.
/// Adds the phase register in |0…0⟩ when absent.
pub fn phase_estimate(
    s: &Statevector,
    family: &UnitaryFamily,
    phase_reg: &str,
    cfg: &PhaseConfig,
    ledger: &mut CostLedger,
) -> Result<Statevector> {
    family.check(s)?;
    let t = cfg.phase_bits;
    let mut cur = if s.has_register(phase_reg) {
        if s.register_dim(phase_reg)? != cfg.dim() {
            return Err(QmmError::Dimension(format!("`{phase_reg}` must hold {t} qubits")));
        }
        s.clone()
    } else {
        s.with_register(phase_reg, t as usize)?
    };
    cur = cur.hadamard_all(phase_reg)?;
    let pows = family.powers(t)?;
    for k in 0..t {
        cur = family.apply_powers(&cur, phase_reg, t, &pows, k)?;
    }
    cur = cur.fourier(phase_reg, true)?;
    ledger.charge_controlled(cfg.controlled_calls() * family.calls_per_application);
    ledger.note_phase_bits(t);
    Ok(cur)
}

/// Exact inverse of [`phase_estimate`]; the phase register stays in the layout.
pub fn inverse_phase_estimate(
    s: &Statevector,
    family: &UnitaryFamily,
    phase_reg: &str,
    cfg: &PhaseConfig,
    ledger: &mut CostLedger,
) -> Result<Statevector> {
    family.check(s)?;
    let t = cfg.phase_bits;
    let mut cur = s.fourier(phase_reg, false)?;
    let pows: Vec<Vec<DenseMatrix>> =
        family.powers(t)?.into_iter().map(|p| p.iter().map(DenseMatrix::adjoint).collect()).collect();
    for k in (0..t).rev() {
        cur = family.apply_powers(&cur, phase_reg, t, &pows, k)?;
    }
    cur = cur.hadamard_all(phase_reg)?;
    ledger.charge_controlled(cfg.controlled_calls() * family.calls_per_application);
    Ok(cur)
}

/// G = (2|φ⟩⟨φ| − I)(Z ⊗ I) with Z|0⟩ = −|0⟩, Z|1⟩ = |1⟩.
#[derive(Clone, Debug)]
pub struct GroverRotation {
    pub operator: DenseMatrix,
    /// sin θ is the norm of the |0⟩ branch; θ ∈ [0, π/2].
    pub theta: f64,
    /// Orthonormal basis {|0⟩|u⟩, |1⟩|v⟩} of the invariant plane.
    pub plane: [Vec<C64>; 2],
}

impl GroverRotation {
    /// Matrix of G on the plane basis and the norm of the out-of-plane residual.
    pub fn plane_action(&self) -> Result<([[C64; 2]; 2], f64)> {
        let mut m = [[ZERO; 2]; 2];
        let mut residual: f64 = 0.0;
        for (c, b) in self.plane.iter().enumerate() {
            let img = self.operator.mul_vec(b)?;
            let (p0, p1) = (inner(&self.plane[0], &img), inner(&self.plane[1], &img));
            m[0][c] = p0;
            m[1][c] = p1;
            let rest: Vec<C64> =
                img.iter().zip(&self.plane[0]).zip(&self.plane[1]).map(|((x, a), b)| x - p0 * a - p1 * b).collect();
            residual = residual.max(norm(&rest));
        }
        Ok((m, residual))
    }
}

/// Splits φ = sinθ|0⟩|u⟩ + cosθ|1⟩|v⟩ over its leading qubit.
pub fn plane_decomposition(phi: &[C64]) -> Result<(f64, [Vec<C64>; 2])> {
    let n = norm(phi);
    if (n - 1.0).abs() > 1e-10 {
        return Err(QmmError::NotNormalized(n));
    }
    let half = phi.len() / 2;
    let (lo, hi) = phi.split_at(half);
    let (s, c) = (norm(lo), norm(hi));
    let theta = s.atan2(c);
    let branch = |part: &[C64], w: f64, offset: usize| -> Vec<C64> {
        let mut v = vec![ZERO; phi.len()];
        if w > 1e-300 {
            for (k, a) in part.iter().enumerate() {
                v[offset + k] = a / w;
            }
        } else {
            // Zero-weight branch: any unit vector in that half spans the plane.
            v[offset] = ONE;
        }
        v
    };
    Ok((theta, [branch(lo, s, 0), branch(hi, c, half)]))
}

/// The Grover rotation of a state whose first register is a single qubit.
pub fn grover_rotation(phi: &Statevector) -> Result<GroverRotation> {
    match phi.layout().first() {
        Some(r) if r.qubits == 1 => {}
        _ => return Err(QmmError::Dimension("leading register must be a single qubit".into())),
    }
    let amps = phi.amplitudes();
    let (theta, plane) = plane_decomposition(amps)?;
    Ok(GroverRotation { operator: grover_matrix(amps), theta, plane })
}

pub(crate) fn grover_matrix(phi: &[C64]) -> DenseMatrix {
    let d = phi.len();
    let mut g = DenseMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let z = if b < d / 2 { -1.0 } else { 1.0 };
            let mut v = 2.0 * phi[a] * phi[b].conj();
            if a == b {
                v -= ONE;
            }
            g.set(a, b, v * z);
        }
    }
    g
}

/// Two's-complement fixed-point encoding of tag and value registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPoint {
    /// Integer bits including the sign bit.
    pub int_bits: u32,
    pub frac_bits: u32,
}

impl FixedPoint {
    /// Register of `width` qubits holding values in [−2, 2).
    pub fn with_width(width: u32) -> Self {
        Self { int_bits: 2, frac_bits: width.saturating_sub(2) }
    }

    pub fn width(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    pub fn resolution(&self) -> f64 {
        1.0 / f64::from(1u32 << self.frac_bits)
    }

    /// Rounds half-to-even onto the grid.
    pub fn encode(&self, x: f64) -> Result<usize> {
        let w = self.width();
        let q = (x * f64::from(1u32 << self.frac_bits)).round_ties_even();
        let lim = f64::from(1u32 << (w - 1));
        if !q.is_finite() || q < -lim || q >= lim {
            return Err(QmmError::EncodingOverflow { value: x, bits: w as usize });
        }
        Ok((q as i64).rem_euclid(1i64 << w) as usize)
    }

    pub fn decode(&self, v: usize) -> f64 {
        signed_label(v, self.width()) as f64 * self.resolution()
    }
}

/// Encoded f(y) for every label, after checking f(y) = f(n − y) and symmetrizing rounding noise.
pub fn even_codes<F: Fn(usize) -> f64>(n: usize, f: F, encoding: FixedPoint) -> Result<Vec<usize>> {
    (0..n)
        .map(|y| {
            let (a, b) = (f(y), f((n - y) % n));
            if (a - b).abs() > 1e-9 * (1.0 + a.abs()) {
                return Err(QmmError::NotEven(y));
            }
            encoding.encode(0.5 * (a + b))
        })
        .collect()
}

/// Writes f(y) into a fresh tag register and undoes the phase estimation, leaving
/// |g(θ)⟩ ⊗ |φ⟩ up to finite-t residue. f must be even over the wrapped labels.
#[allow(clippy::too_many_arguments)]
pub fn tag_even_function<F: Fn(usize) -> f64>(
    s: &Statevector,
    family: &UnitaryFamily,
    phase_reg: &str,
    cfg: &PhaseConfig,
    f: F,
    tag_reg: &str,
    encoding: FixedPoint,
    ledger: &mut CostLedger,
) -> Result<Statevector> {
    let codes = even_codes(cfg.dim(), f, encoding)?;
    let width = encoding.width() as usize;
    let tagged = s.with_register(tag_reg, width)?;
    let mask = (1usize << width) - 1;
    let tagged = tagged.apply_permutation(&[phase_reg, tag_reg], |v| {
        let (y, tag) = (v >> width, v & mask);
        (y << width) | (tag ^ codes[y])
    })?;
    inverse_phase_estimate(&tagged, family, phase_reg, cfg, ledger)
}

fn rotation(a: f64) -> DenseMatrix {
    let b = (1.0 - a * a).max(0.0).sqrt();
    DenseMatrix::from_real(2, 2, &[a, -b, b, a]).expect("2x2")
}

/// Appends `ancilla` holding amp(v)|0⟩ + √(1−amp(v)²)|1⟩ for each value v of `reg`.
/// Callers guarantee |amp(v)| ≤ 1.
pub(crate) fn rotate_by_value<F: Fn(usize) -> f64>(s: &Statevector, reg: &str, amp: F, ancilla: &str) -> Result<Statevector> {
    let d = s.register_dim(reg)?;
    let ops: Vec<DenseMatrix> = (0..d).map(|v| rotation(amp(v).clamp(-1.0, 1.0))).collect();
    s.with_register(ancilla, 1)?.apply_select(&[reg], &[ancilla], |v| Some(&ops[v]))
}

/// Controlled rotation c·σ̃|0⟩ + √(1 − c²σ̃²)|1⟩ on a fresh ancilla, σ̃ decoded from `value_reg`.
pub fn controlled_value_rotation(
    s: &Statevector,
    value_reg: &str,
    encoding: FixedPoint,
    scale: f64,
    ancilla: &str,
) -> Result<Statevector> {
    let probs = s.probabilities(value_reg)?;
    for (v, p) in probs.iter().enumerate() {
        if *p <= POPULATED_TOL {
            continue;
        }
        let x = encoding.decode(v);
        if x < 0.0 {
            return Err(QmmError::Parameter(format!("negative encoded value {x}")));
        }
        if scale * x > 1.0 + 1e-12 {
            return Err(QmmError::RotationOverflow(scale * x));
        }
    }
    rotate_by_value(s, value_reg, |v| (scale * encoding.decode(v)).min(1.0), ancilla)
}

/// Inverse of [`controlled_value_rotation`]: rotates back and drops the ancilla.
pub fn undo_value_rotation(
    s: &Statevector,
    value_reg: &str,
    encoding: FixedPoint,
    scale: f64,
    ancilla: &str,
) -> Result<Statevector> {
    let d = s.register_dim(value_reg)?;
    let ops: Vec<DenseMatrix> =
        (0..d).map(|v| rotation((scale * encoding.decode(v)).clamp(-1.0, 1.0)).adjoint()).collect();
    let back = s.apply_select(&[value_reg], &[ancilla], |v| Some(&ops[v]))?;
    let p = back.postselect(ancilla, 0)?;
    if (p.success_probability - 1.0).abs() > 1e-10 {
        return Err(QmmError::Parameter("ancilla did not return to |0⟩".into()));
    }
    Ok(p.state)
}
