//! Harness-level runs through the public API: fixtures, file inputs, reports and verification.

use std::path::PathBuf;

use qmatmul::harness::{
    run_batch, run_experiment, verify_bounds, write_matrix_csv, ExperimentConfig, Method, ReportTable,
};
use qmatmul::linalg::DenseMatrix;
use qmatmul::QmmError;

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qmm-e2e-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn every_method_passes_and_verifies() {
    for method in Method::ALL {
        let size = if method.is_prep() { 16 } else { 4 };
        let kappa = if method.is_prep() { 32.0 } else { 3.0 };
        let cfg = ExperimentConfig { method, size, kappa, ..ExperimentConfig::default() };
        let table = run_batch(&cfg, &[1, 2]).unwrap();
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert!(row.passed, "{}: {:.3e} > {:.3e}", row.descriptor, row.realized_error, row.bound);
        }
        let reloaded = ReportTable::from_json(&table.to_json().unwrap()).unwrap();
        let summary = verify_bounds(&reloaded).unwrap();
        assert!(summary.passed(), "{method}: {:?}", summary.violations);
        assert!(table.to_csv().unwrap().lines().count() == 3);
    }
}

#[test]
fn tampered_bound_is_caught() {
    let cfg = ExperimentConfig { method: Method::ReadoutSve, size: 3, ..ExperimentConfig::default() };
    let mut table = run_batch(&cfg, &[4]).unwrap();
    table.rows[0].bound *= 0.5;
    let summary = verify_bounds(&table).unwrap();
    assert_eq!(summary.violations.len(), 1);
    assert!(summary.violations[0].descriptor.contains("seed=4"));
}

#[test]
fn file_inputs_match_generated_runs() {
    let dir = scratch_dir("files");
    let (a, b) = qmatmul::harness::generate_pair(3, 2.0, 7).unwrap();
    let (pa, pb) = (dir.join("a.csv"), dir.join("b.csv"));
    write_matrix_csv(&a, &pa).unwrap();
    write_matrix_csv(&b, &pb).unwrap();

    let generated = run_experiment(&ExperimentConfig { method: Method::Hhl, size: 3, seed: 7, ..ExperimentConfig::default() }).unwrap();
    let from_files =
        run_experiment(&ExperimentConfig { method: Method::Hhl, inputs: vec![pa, pb], ..ExperimentConfig::default() }).unwrap();
    let (g, f) = (&generated.rows[0], &from_files.rows[0]);
    assert!((g.realized_error - f.realized_error).abs() < 1e-12);
    assert_eq!(g.ledger, f.ledger);
    assert!(f.descriptor.contains("a.csv"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn strict_support_errors_name_the_run() {
    let dir = scratch_dir("support");
    let (pa, pb) = (dir.join("a.csv"), dir.join("b.csv"));
    write_matrix_csv(&DenseMatrix::diag(&[1.0, 0.0]), &pa).unwrap();
    write_matrix_csv(&DenseMatrix::identity(2), &pb).unwrap();
    let cfg = ExperimentConfig { method: Method::Sve, strict_support: true, inputs: vec![pa.clone(), pb.clone()], ..ExperimentConfig::default() };
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, QmmError::Context { .. }));
    assert!(err.to_string().contains("a.csv"), "{err}");

    let lenient = ExperimentConfig { strict_support: false, ..cfg };
    assert!(run_experiment(&lenient).unwrap().all_passed());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn exact_phase_rows_hit_the_exact_tolerance() {
    for method in [Method::Swap, Method::Sve, Method::Hhl, Method::Lcu] {
        let cfg = ExperimentConfig { method, exact_phase: true, size: 4, kappa: 8.0, ..ExperimentConfig::default() };
        let t = run_batch(&cfg, &[3, 5]).unwrap();
        assert!(t.rows.iter().all(|r| r.realized_error < 1e-10 && r.phase_bits == 0), "{method}");
    }
}

#[test]
fn mismatched_instance_is_rejected() {
    let dir = scratch_dir("kind");
    let p = dir.join("x.csv");
    std::fs::write(&p, "1\n2\n").unwrap();
    let cfg = ExperimentConfig { method: Method::Swap, inputs: vec![p], ..ExperimentConfig::default() };
    assert!(cfg.validate().is_err() || run_experiment(&cfg).is_err());
    std::fs::remove_dir_all(dir).ok();
}
