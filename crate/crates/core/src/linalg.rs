//! Dense complex matrices, exact classical oracles and matrix profiles.
//!
//! Everything here is classical. The quantum pipelines compare their output
//! states against [`vectorize`]`(`[`exact_product`]`(a, b))`.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QmmError, Result};
use crate::sim::Statevector;

pub type C64 = Complex64;

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Row-major complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(QmmError::InvalidMatrix("empty shape".into()));
        }
        if data.len() != rows * cols {
            return Err(QmmError::InvalidMatrix(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QmmError::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                k / cols,
                k % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(rows, cols, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Builds a matrix from equally long real rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(QmmError::InvalidMatrix("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_real(rows.len(), cols, &flat)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = C64::new(v, 0.0);
        }
        m
    }

    /// Column vector (n x 1).
    pub fn column(values: &[C64]) -> Result<Self> {
        Self::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        self.data[i * self.cols + j] = z;
    }

    pub fn row(&self, i: usize) -> Vec<C64> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn col(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.data[j * self.rows + i] = self.get(i, j).conj();
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.data[j * self.rows + i] = self.get(i, j);
            }
        }
        m
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(QmmError::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// Schoolbook product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(QmmError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if v.len() != self.cols {
            return Err(QmmError::Dimension(format!(
                "vector of length {} for {} columns",
                v.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.data[i * self.cols..(i + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        let mut m = Self::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self.get(i, j);
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        m.data[(i * other.rows + k) * c + j * other.cols + l] = a * other.get(k, l);
                    }
                }
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows).map(|i| norm(&self.data[i * self.cols..(i + 1) * self.cols])).collect()
    }

    pub fn col_norms(&self) -> Vec<f64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j).norm_sqr()).sum::<f64>().sqrt()).collect()
    }

    /// Zero-padded copy with at least the requested shape.
    pub fn padded(&self, rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows.max(self.rows), cols.max(self.cols));
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.set(i, j, self.get(i, j));
            }
        }
        m
    }

    /// Largest entry of |U†U − I|; zero for an exact unitary.
    pub fn unitarity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let mut z = ZERO;
                for k in 0..n {
                    z += self.get(k, a).conj() * self.get(k, b);
                }
                if a == b {
                    z -= ONE;
                }
                worst = worst.max(z.norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub(crate) fn to_na(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ⟨x|y⟩ with the first argument conjugated.
pub fn inner(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn normalized(v: &[C64]) -> Result<Vec<C64>> {
    let n = norm(v);
    if n == 0.0 {
        return Err(QmmError::ZeroInput("vector has zero norm".into()));
    }
    Ok(v.iter().map(|z| z / n).collect())
}

pub fn real_vec(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

pub fn qubits_for(dim: usize) -> usize {
    next_pow2(dim).trailing_zeros() as usize
}

/// Unitary whose first column is `psi`: a Householder reflection times a phase.
pub fn unitary_from_first_column(psi: &[C64]) -> Result<DenseMatrix> {
    let n = psi.len();
    let nrm = norm(psi);
    if (nrm - 1.0).abs() > 1e-10 {
        return Err(QmmError::NotNormalized(nrm));
    }
    let a0 = psi[0];
    let omega = if a0.norm() > 0.0 { a0 / a0.norm() } else { ONE };
    // w = ω e0 − ψ, reflection maps ω e0 to ψ because ⟨ω e0|ψ⟩ = |ψ0| is real.
    let mut w: Vec<C64> = psi.iter().map(|z| -z).collect();
    w[0] += omega;
    let ww = norm(&w).powi(2);
    let mut u = DenseMatrix::identity(n).scaled(omega);
    if ww > 1e-28 {
        for i in 0..n {
            for j in 0..n {
                let h = u.get(i, j) - omega * 2.0 * w[i] * w[j].conj() / ww;
                u.set(i, j, h);
            }
        }
    }
    Ok(u)
}

/// Gauge-fixed singular triples sorted by decreasing σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdBundle {
    pub sigmas: Vec<f64>,
    pub left: Vec<Vec<C64>>,
    pub right: Vec<Vec<C64>>,
    pub rank: usize,
    pub gauge: String,
}

impl SvdBundle {
    pub fn sigma_max(&self) -> f64 {
        self.sigmas.first().copied().unwrap_or(0.0)
    }

    /// Σ σ_i u_i v_i†.
    pub fn reconstruct(&self, rows: usize, cols: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(rows, cols);
        for ((s, u), v) in self.sigmas.iter().zip(&self.left).zip(&self.right) {
            for i in 0..rows {
                for j in 0..cols {
                    let z = m.get(i, j) + u[i] * v[j].conj() * *s;
                    m.set(i, j, z);
                }
            }
        }
        m
    }
}

pub const GAUGE_RULE: &str = "first nonzero coordinate of each v_i real and positive";

pub fn compute_svd(a: &DenseMatrix) -> Result<SvdBundle> {
    let svd = SVD::try_new(a.to_na(), true, true, f64::EPSILON, 10_000).ok_or(QmmError::NoConvergence)?;
    let u = svd.u.ok_or(QmmError::NoConvergence)?;
    let vt = svd.v_t.ok_or(QmmError::NoConvergence)?;
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]).then(x.cmp(&y)));
    let smax = order.first().map_or(0.0, |&i| svd.singular_values[i]);

    let mut bundle = SvdBundle { sigmas: vec![], left: vec![], right: vec![], rank: 0, gauge: GAUGE_RULE.into() };
    for &idx in &order {
        let mut s = svd.singular_values[idx];
        if s <= RANK_TOL * smax || smax == 0.0 {
            s = 0.0;
        } else {
            bundle.rank += 1;
        }
        let mut uc: Vec<C64> = (0..a.rows()).map(|i| u[(i, idx)]).collect();
        let mut vc: Vec<C64> = (0..a.cols()).map(|j| vt[(idx, j)].conj()).collect();
        if let Some(first) = vc.iter().find(|z| z.norm() > 1e-8).copied() {
            let phase = first.conj() / first.norm();
            vc.iter_mut().for_each(|z| *z *= phase);
            uc.iter_mut().for_each(|z| *z *= phase);
        }
        bundle.sigmas.push(s);
        bundle.left.push(uc);
        bundle.right.push(vc);
    }
    Ok(bundle)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &DenseMatrix) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    if !h.is_square() {
        return Err(QmmError::Dimension("Hermitian eigensolver needs a square matrix".into()));
    }
    let eig = SymmetricEigen::try_new(h.to_na(), f64::EPSILON, 10_000).ok_or(QmmError::NoConvergence)?;
    let n = h.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|r| eig.eigenvectors[(r, i)]).collect()).collect();
    Ok((values, vectors))
}

/// exp(i·τ·H) for Hermitian H, via its eigen-decomposition.
pub fn hermitian_exp_i(h: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let n = h.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for (lam, v) in vals.iter().zip(&vecs) {
        let ph = C64::from_polar(1.0, lam * tau);
        for i in 0..n {
            for j in 0..n {
                let z = out.get(i, j) + ph * v[i] * v[j].conj();
                out.set(i, j, z);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixProfile {
    pub rows: usize,
    pub cols: usize,
    pub frobenius: f64,
    pub row_norms: Vec<f64>,
    pub col_norms: Vec<f64>,
    pub sigma_max: f64,
    pub sigma_min_nonzero: Option<f64>,
    /// σ_max / σ_min over nonzero σ; absent when the rank is at most one.
    pub kappa: Option<f64>,
    pub rank: usize,
    /// (Σ_j ‖A_{•j}‖³)^{1/3}, used by the SVE readout cost model.
    pub col_norm_l3: f64,
}

impl MatrixProfile {
    /// Rank-deficient inputs are flagged rather than rejected.
    pub fn is_singular(&self) -> bool {
        self.rank < self.rows.min(self.cols)
    }

    /// κ with the rank-one and zero cases mapped to 1.
    pub fn kappa_or_one(&self) -> f64 {
        self.kappa.unwrap_or(1.0)
    }
}

pub fn matrix_profile(a: &DenseMatrix) -> Result<MatrixProfile> {
    let svd = compute_svd(a)?;
    let col_norms = a.col_norms();
    let sigma_min_nonzero = svd.sigmas.iter().rev().copied().find(|&s| s > 0.0);
    let kappa = match sigma_min_nonzero {
        Some(m) if svd.rank >= 2 => Some(svd.sigma_max() / m),
        _ => None,
    };
    Ok(MatrixProfile {
        rows: a.rows(),
        cols: a.cols(),
        frobenius: a.frobenius(),
        row_norms: a.row_norms(),
        col_norm_l3: col_norms.iter().map(|c| c.powi(3)).sum::<f64>().cbrt(),
        col_norms,
        sigma_max: svd.sigma_max(),
        sigma_min_nonzero,
        kappa,
        rank: svd.rank,
    })
}

/// [[0, A], [A†, 0]].
pub fn hermitian_dilation(a: &DenseMatrix) -> DenseMatrix {
    let (r, c) = (a.rows(), a.cols());
    let mut m = DenseMatrix::zeros(r + c, r + c);
    for i in 0..r {
        for j in 0..c {
            m.set(i, r + j, a.get(i, j));
            m.set(r + j, i, a.get(i, j).conj());
        }
    }
    m
}

pub fn exact_product(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

/// Amplitude encodings of a matrix: |A⟩ on (i, j) and its two marginals.
#[derive(Clone, Debug)]
pub struct Vectorized {
    pub state: Statevector,
    /// |A_{F•}⟩ on register `i`: amplitudes ‖A_{i•}‖/‖A‖_F.
    pub row_norm_state: Statevector,
    /// |A_{•F}⟩ on register `j`: amplitudes ‖A_{•j}‖/‖A‖_F.
    pub col_norm_state: Statevector,
}

pub fn vectorize(a: &DenseMatrix) -> Result<Vectorized> {
    vectorize_named(a, "i", "j")
}

pub fn vectorize_named(a: &DenseMatrix, row_reg: &str, col_reg: &str) -> Result<Vectorized> {
    let f = a.frobenius();
    if f == 0.0 {
        return Err(QmmError::ZeroInput("cannot encode the zero matrix".into()));
    }
    let (qr, qc) = (qubits_for(a.rows()), qubits_for(a.cols()));
    let (dr, dc) = (1usize << qr, 1usize << qc);
    let mut amps = vec![ZERO; dr * dc];
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            amps[i * dc + j] = a.get(i, j) / f;
        }
    }
    let pad = |v: Vec<f64>, d: usize| {
        let mut out = vec![ZERO; d];
        for (k, x) in v.into_iter().enumerate() {
            out[k] = C64::new(x / f, 0.0);
        }
        out
    };
    Ok(Vectorized {
        state: Statevector::new(&[(row_reg, qr), (col_reg, qc)], amps)?,
        row_norm_state: Statevector::new(&[(row_reg, qr)], pad(a.row_norms(), dr))?,
        col_norm_state: Statevector::new(&[(col_reg, qc)], pad(a.col_norms(), dc))?,
    })
}
