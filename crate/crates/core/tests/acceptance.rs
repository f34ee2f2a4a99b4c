//! Acceptance suite: one PASS/FAIL line per criterion, with its runtime against the budget.
//!
//! Oracles here are written from the defining formulas and avoid the library's own bound helpers.
//! Sub-checks that cannot hold mathematically are reported as FAIL but listed in `KNOWN` so the
//! process still exits cleanly; every other failure exits nonzero.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use qmatmul::harness::{fit_loglog, generate_pair, generate_vector, scaling_study, Method, ScalingSpec};
use qmatmul::linalg::{compute_svd, DenseMatrix, C64};
use qmatmul::matmul::{
    matmul_hhl_with, matmul_lcu_with, matmul_sve_with, matmul_swaptest_with, PipelineConfig, PipelineResult, SveOperators,
};
use qmatmul::prep::{prep_dyadic, prep_hamiltonian, prep_signshift, synthesize_direct, VectorSpec, DATA_REG};
use qmatmul::readout::{readout_hhl, readout_sve, readout_swaptest, ReadoutReport};
use qmatmul::sim::Statevector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Criterion numbers whose failure is a documented mathematical impossibility.
const KNOWN: &[(u32, &str)] = &[(
    5,
    "P >= eps0^2 cannot hold when kappa(f) = 1: every angle equals eps0 and P = sin^2(eps0) < eps0^2",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    DenseMatrix::from_real(rows, cols, &v).unwrap()
}

fn real_part(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j).re)
}

/// Naive triple loop, kept apart from the library product.
fn product(a: &DenseMatrix, b: &DenseMatrix) -> Vec<Vec<C64>> {
    (0..a.rows())
        .map(|i| (0..b.cols()).map(|j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()).collect())
        .collect()
}

fn frob(c: &[Vec<C64>]) -> f64 {
    c.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Σ C_ij |i, j⟩/‖C‖_F on the padded (row, column) grid.
fn vectorized(c: &[Vec<C64>]) -> Vec<C64> {
    let (r, k) = (c.len(), c[0].len());
    let jdim = k.next_power_of_two();
    let f = frob(c);
    let mut v = vec![C64::new(0.0, 0.0); r.next_power_of_two() * jdim];
    for i in 0..r {
        for j in 0..k {
            v[i * jdim + j] = c[i][j] / f;
        }
    }
    v
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// σ from the eigenvalues of AᵀA, descending.
fn sigmas_from_gram(a: &DenseMatrix) -> Vec<f64> {
    let m = real_part(a);
    let mut s: Vec<f64> = SymmetricEigen::new(m.transpose() * &m).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..50u64 {
        let n = 2 + (k as usize % 7);
        let a = gaussian(n, n, 1000 + k);
        let af = a.frobenius();
        let ops = SveOperators::new(&a).unwrap();
        let svd = compute_svd(&a).unwrap();
        let gram = sigmas_from_gram(&a);
        // On each plane W acts as a rotation by θ_i, so (W + Wᵀ)/2 has eigenvalue cos θ_i = 2(σ_i/‖A‖_F)² − 1.
        let w = real_part(&ops.walk);
        let sym_eigs: Vec<f64> = SymmetricEigen::new((&w + w.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        for (i, (u, v)) in svd.left.iter().zip(&svd.right).enumerate() {
            let ph = ops.plane_phase(u, v).unwrap();
            worst = worst.max(((ph.theta / 2.0).cos() - gram[i] / af).abs());
            let c = 2.0 * (gram[i] / af).powi(2) - 1.0;
            let nearest = sym_eigs.iter().map(|e| (e - c).abs()).fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    Outcome { pass: worst <= 1e-8, detail: format!("50 matrices, max |cos(theta/2) - sigma/|A|_F| = {worst:.2e}") }
}

fn criterion_2() -> Outcome {
    let mut runs = 0;
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..30u64 {
        let kappa = [1.5, 4.0, 16.0][seed as usize % 3];
        let (a, b) = generate_pair(4, kappa, 200 + seed).unwrap();
        let c = product(&a, &b);
        for t in [8u32, 10] {
            let cfg = PipelineConfig { phase_bits: Some(t), ..PipelineConfig::default() };
            let r = matmul_swaptest_with(&a, &b, 0.05, &cfg).unwrap();
            let eps = std::f64::consts::PI / f64::from(1u32 << t);
            let q = (a.frobenius() * b.frobenius() / frob(&c)).powi(2);
            let rhs = 2.0 * q * eps * eps + 2.0 * q * q * eps * eps;
            let d2 = distance(r.state.state.amplitudes(), &vectorized(&c)).powi(2);
            runs += 1;
            violations += usize::from(d2 > rhs);
            worst_ratio = worst_ratio.max(d2 / rhs);
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{runs} runs at t in {{8, 10}}, {violations} violations, max |C - C~|^2 / bound = {worst_ratio:.3}"),
    }
}

/// The spectral error bound written out from σ, σ̃ and the column overlaps.
fn spectral_bound_oracle(a: &DenseMatrix, b: &DenseMatrix, r: &PipelineResult, scale: f64) -> f64 {
    let svd = compute_svd(a).unwrap();
    let eps = r.accuracy * scale;
    let b_f = b.frobenius();
    let mut z = 0.0;
    let mut max_sum: f64 = 0.0;
    for ((v, s), e) in svd.right.iter().zip(&svd.sigmas).zip(&r.effective_values) {
        let Some(e) = e else { continue };
        let weight: f64 = (0..b.cols())
            .map(|j| v.iter().zip(b.col(j)).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr())
            .sum();
        z += weight * e * e;
        max_sum = max_sum.max((e + s).abs());
    }
    let w = frob(&product(a, b)).powi(2);
    let first = 2.0 * eps * eps * b_f * b_f / z;
    let second = 2.0 * eps * eps * b_f.powi(4) * max_sum * max_sum / (z * (z.sqrt() + w.sqrt()).powi(2));
    (first + second).sqrt()
}

fn criterion_3() -> Outcome {
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut mismatch: f64 = 0.0;
    for seed in 0..30u64 {
        let kappa = [1.5, 2.0, 3.0][seed as usize % 3];
        let eps = [0.1, 0.05][seed as usize % 2];
        let (a, b) = generate_pair(4, kappa, 300 + seed).unwrap();
        let r = matmul_sve_with(&a, &b, eps, &PipelineConfig::default()).unwrap();
        let bound = spectral_bound_oracle(&a, &b, &r, a.frobenius());
        let d = distance(r.state.state.amplitudes(), &vectorized(&product(&a, &b)));
        violations += usize::from(d > bound);
        worst_ratio = worst_ratio.max(d / bound);
        mismatch = mismatch.max((bound - r.predicted_bound).abs() / bound);
    }
    Outcome {
        pass: violations == 0 && mismatch < 1e-6,
        detail: format!(
            "30 runs, {violations} violations, max distance / bound = {worst_ratio:.3}, library vs oracle bound rel diff {mismatch:.1e}"
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut violations = 0;
    let mut worst = [0.0f64; 3];
    for seed in 0..20u64 {
        let n = 3 + (seed as usize % 2);
        let (a, b) = generate_pair(n, 1.5 + (seed % 4) as f64, 400 + seed).unwrap();
        let c = product(&a, &b);
        for eps in [0.1, 0.05] {
            let reports: [ReadoutReport; 3] =
                [readout_swaptest(&a, &b, eps).unwrap(), readout_sve(&a, &b, eps).unwrap(), readout_hhl(&a, &b, eps).unwrap()];
            for (k, rep) in reports.iter().enumerate() {
                let err = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| (rep.c_tilde.get(i, j) - c[i][j]).norm())
                    .fold(0.0, f64::max);
                violations += usize::from(err > eps);
                worst[k] = worst[k].max(err / eps);
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "120 readouts, {violations} violations, max error / eps: swap {:.3}, sve {:.3}, hhl {:.3}",
            worst[0], worst[1], worst[2]
        ),
    }
}

fn criterion_5() -> Outcome {
    let mut distance_violations = 0;
    let mut upper_violations = 0;
    let mut lower_violations = Vec::new();
    for k in 0..30u64 {
        let kappa = [1.0, 2.0, 8.0, 32.0][k as usize % 4];
        let n = [4, 8, 16][k as usize % 3];
        let f = generate_vector(n, kappa, 500 + k).unwrap();
        let base = Statevector::from_vector(DATA_REG, &vec![C64::new(1.0, 0.0); n]).unwrap();
        let eps = 0.05;
        let r = prep_hamiltonian(&f, &base, eps).unwrap();
        let h = r.hamiltonian.unwrap();
        // Independent ε₁ = eps/√κ(f), ε₀ = ε₁/κ(f).
        let e1 = eps / kappa.sqrt();
        let e0 = e1 / kappa;
        let target: Vec<C64> = {
            let nf = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            f.iter().map(|x| C64::new(x / nf, 0.0)).collect()
        };
        let d = distance(&r.result.state.amplitudes()[..n], &target);
        distance_violations += usize::from(d > (kappa / 3.0).sqrt() * e1);
        let p = r.result.success_probability;
        upper_violations += usize::from(p > e1 * e1);
        if p < e0 * e0 {
            lower_violations.push(kappa);
        }
        assert!((h.epsilon1 - e1).abs() < 1e-15 && (h.epsilon0 - e0).abs() < 1e-15);
    }
    let at_one = lower_violations.iter().all(|k| *k == 1.0);
    Outcome {
        pass: distance_violations == 0 && upper_violations == 0 && lower_violations.is_empty(),
        detail: format!(
            "30 runs: distance bound {distance_violations} violations, P <= eps1^2 {upper_violations} violations, \
             eps0^2 <= P {} violations{}",
            lower_violations.len(),
            if !lower_violations.is_empty() && at_one { " (all at kappa(f) = 1)" } else { "" }
        ),
    }
}

fn criterion_6() -> Outcome {
    let eps = 0.05;
    let mut worst: f64 = 1.0;
    for k in 0..20u64 {
        let n = [8, 16, 32, 64][k as usize % 4];
        let kappa = 2f64.powi([1, 4, 7, 10][(k as usize / 4) % 4]);
        let x = VectorSpec::new(&generate_vector(n, kappa, 600 + k).unwrap()).unwrap();
        let states = [
            synthesize_direct(&x).unwrap().state,
            prep_dyadic(&x, eps).unwrap().result.state,
            prep_signshift(&x, eps).unwrap().result.state,
        ];
        for i in 0..3 {
            for j in i + 1..3 {
                let ov: C64 =
                    states[i].amplitudes().iter().zip(states[j].amplitudes()).map(|(a, b)| a.conj() * b).sum();
                worst = worst.min(ov.norm_sqr());
            }
        }
    }
    Outcome { pass: worst >= 1.0 - 2.0 * eps, detail: format!("20 vectors, min pairwise |<a|b>|^2 = {worst:.7} (need >= 0.9)") }
}

type Pipeline = fn(&DenseMatrix, &DenseMatrix, f64, &PipelineConfig) -> qmatmul::Result<PipelineResult>;

fn criterion_7() -> Outcome {
    let pipelines: [(&str, Pipeline); 4] =
        [("swap", matmul_swaptest_with), ("sve", matmul_sve_with), ("hhl", matmul_hhl_with), ("lcu", matmul_lcu_with)];
    let mut fixtures: Vec<(DenseMatrix, DenseMatrix)> =
        (0..16u64).map(|s| generate_pair(2 + (s as usize % 3), 1.0 + (s % 5) as f64, 700 + s).unwrap()).collect();
    fixtures.push((gaussian(3, 5, 1), gaussian(5, 2, 2)));
    fixtures.push((gaussian(4, 2, 3), gaussian(2, 3, 4)));
    fixtures.push((DenseMatrix::identity(2), DenseMatrix::identity(2)));
    fixtures.push((DenseMatrix::diag(&[1.0, 0.5]), gaussian(2, 2, 5)));
    let mut worst: f64 = 0.0;
    for (a, b) in &fixtures {
        let want = vectorized(&product(a, b));
        for (_, f) in &pipelines {
            let r = f(a, b, 0.05, &PipelineConfig::exact()).unwrap();
            worst = worst.max(distance(r.state.state.amplitudes(), &want));
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("{} fixtures x swap/sve/hhl/lcu, max distance to |AB> = {worst:.2e}", fixtures.len()),
    }
}

fn criterion_8() -> Outcome {
    let study = |method, n_grid, eps_grid, kappa_grid| {
        scaling_study(&ScalingSpec { method, n_grid, eps_grid, kappa_grid, seeds: vec![1, 2, 3], metric: None, phase_bits: None })
            .unwrap()
    };
    let a = study(Method::ReadoutSwap, vec![4], vec![0.125, 0.0625, 0.03125, 0.015625, 0.0078125], vec![2.0]);
    let b = study(Method::ReadoutSwap, vec![2, 4, 8], vec![0.05], vec![2.0]);
    let c = study(Method::PrepHamiltonian, vec![8], vec![0.05], vec![2.0, 4.0, 8.0, 16.0, 32.0]);
    let sa = a.slope_inv_eps.as_ref().unwrap().slope;
    let sb = b.slope_n.as_ref().unwrap().slope;
    let sc = c.slope_kappa.as_ref().unwrap().slope;

    // Refit (c) from the raw cells: geometric mean of amplification rounds over seeds against κ^{3/2}.
    let kappas = [2.0, 4.0, 8.0, 16.0, 32.0];
    let rounds: Vec<f64> = kappas
        .iter()
        .map(|k| {
            let logs: Vec<f64> = c.cells.iter().filter(|cell| cell.kappa == *k).map(|cell| cell.cost.ln()).collect();
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        })
        .collect();
    let xs: Vec<f64> = kappas.iter().map(|k: &f64| k.powf(1.5)).collect();
    let refit = fit_loglog("kappa^1.5", &xs, &rounds).unwrap().slope;

    let pass = (sa - 1.0).abs() <= 0.15 && (sb - 2.0).abs() <= 0.2 && (sc - 1.0).abs() <= 0.2 && (refit - sc).abs() < 1e-9;
    Outcome {
        pass,
        detail: format!("(a) readout-swap vs 1/eps {sa:.3}, (b) vs n {sb:.3}, (c) prep-hamiltonian rounds vs kappa^1.5 {sc:.3}"),
    }
}

fn criterion_9() -> Outcome {
    let mut worst = [0.0f64; 2];
    for seed in 0..20u64 {
        let (a, b) = generate_pair(4, 1.5 + (seed % 3) as f64, 900 + seed).unwrap();
        let c_f = frob(&product(&a, &b));
        let (a_f, b_f) = (a.frobenius(), b.frobenius());
        let cfg = PipelineConfig { phase_bits: Some(8), ..PipelineConfig::default() };
        let p = matmul_swaptest_with(&a, &b, 0.05, &cfg).unwrap().success_probability();
        worst[0] = worst[0].max((p / (c_f / (a_f * b_f)).powi(2) - 1.0).abs());
        let smax = sigmas_from_gram(&a)[0];
        let p = matmul_sve_with(&a, &b, 0.05, &cfg).unwrap().success_probability();
        worst[1] = worst[1].max((p / (c_f / (b_f * smax)).powi(2) - 1.0).abs());
    }
    Outcome {
        pass: worst.iter().all(|w| *w <= 0.05),
        detail: format!("20 fixtures at t = 8, max relative deviation: swap {:.4}, sve {:.4}", worst[0], worst[1]),
    }
}

/// Number, name, runtime budget and check.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "walk eigenphases match singular values", Duration::from_secs(10), criterion_1),
        (2, "swap pipeline error bound", Duration::from_secs(120), criterion_2),
        (3, "singular-value pipeline error bound", Duration::from_secs(120), criterion_3),
        (4, "entrywise readout within eps_abs", Duration::from_secs(120), criterion_4),
        (5, "Hamiltonian preparation bounds", Duration::from_secs(30), criterion_5),
        (6, "state preparation methods agree", Duration::from_secs(60), criterion_6),
        (7, "exact-phase pipelines reproduce |AB>", Duration::from_secs(60), criterion_7),
        (8, "ledger slopes", Duration::from_secs(300), criterion_8),
        (9, "postselection probabilities", Duration::from_secs(60), criterion_9),
    ];
    let mut unexpected = 0;
    let mut passed = 0;
    for (id, name, budget, run) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let ok = out.pass && in_time;
        let known = KNOWN.iter().find(|(k, _)| *k == id);
        println!(
            "criterion {id} [{}] {name}: {} ({:.2}s of {}s)",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if ok {
            passed += 1;
        } else if let (Some((_, why)), true) = (known, in_time) {
            println!("    known: {why}");
        } else {
            unexpected += 1;
        }
    }
    println!("acceptance: {passed}/9 PASS, {unexpected} unexpected failure(s)");
    if unexpected > 0 {
        std::process::exit(1);
    }
}
