//! `qmm`: run matrix-multiplication, readout and state-preparation experiments, scaling
//! studies and report verification from the command line.
//!
//! Exit status is 0 when every checked bound holds, 1 when a bound is violated and 2 on errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qmatmul::harness::{
    generate_matrix, generate_pair, generate_vector, matrix_to_csv, run_batch, run_experiment, scaling_study,
    verify_report_file, CostMetric, ExperimentConfig, Method, ReportTable, ScalingSpec,
};
use qmatmul::linalg::DenseMatrix;

#[derive(Parser)]
#[command(name = "qmm", version, about = "Simulated quantum matrix multiplication experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare the state |AB⟩ with a quantum pipeline and check its error bound.
    Multiply(RunArgs),
    /// Estimate the entries of AB to absolute accuracy eps.
    Readout(RunArgs),
    /// Prepare the amplitude encoding of a real vector.
    Prepare(RunArgs),
    /// Ledger costs over a grid of sizes, accuracies and condition numbers, with log-log slopes.
    Scaling(ScalingArgs),
    /// Recompute the bounds of a stored JSON report.
    Verify(VerifyArgs),
    /// Write a seeded fixture with a controlled condition number as CSV.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline name, e.g. swap, sve, hhl, lcu; for `prepare` one of direct, hamiltonian,
    /// sparse, sparse-unknown, dyadic, signshift.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Fix the phase register width instead of deriving it from eps.
    #[arg(long)]
    phase_bits: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run one generated fixture per seed (comma separated) instead of a single run.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["a", "b", "x"])]
    seeds: Option<Vec<u64>>,
    /// Reject B columns with weight on the null space of A.
    #[arg(long)]
    strict_support: bool,
    /// Replace phase estimation by the exact spectral function.
    #[arg(long)]
    exact_phase: bool,
    /// CSV file holding A.
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    /// CSV file holding B.
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    /// CSV file holding the vector to prepare.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Dimension of generated fixtures.
    #[arg(long, default_value_t = 4)]
    size: usize,
    /// Condition number of generated fixtures.
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    /// Also write the output matrix or amplitudes of a single run as CSV.
    #[arg(long)]
    entries: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScalingArgs {
    /// Full method name, e.g. readout-swap or prep-hamiltonian.
    #[arg(long)]
    method: String,
    #[arg(long = "n", value_delimiter = ',', default_value = "4")]
    n_grid: Vec<usize>,
    #[arg(long = "eps", value_delimiter = ',', default_value = "0.05")]
    eps_grid: Vec<f64>,
    #[arg(long = "kappa", value_delimiter = ',', default_value = "2")]
    kappa_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// total-calls, amplification-rounds or hamiltonian-units.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    phase_bits: Option<u32>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON report written by multiply, readout or prepare.
    report: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Matrix,
    Pair,
    Vector,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long, default_value_t = 4)]
    size: usize,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; a pair writes <out> for A and <out-stem>.b.csv for B.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

/// `verb`-specific method names: `multiply` takes bare pipeline names, `readout` and
/// `prepare` accept both the bare and the prefixed form.
fn resolve_method(verb: &str, name: &str) -> Result<Method> {
    let candidates = match verb {
        "readout" => vec![format!("readout-{name}"), name.to_string()],
        "prepare" => vec![format!("prep-{name}"), name.to_string()],
        _ => vec![name.to_string()],
    };
    let method = candidates.iter().find_map(|c| c.parse::<Method>().ok());
    let Some(method) = method else { bail!("unknown method `{name}` for `{verb}`") };
    let fits = match verb {
        "readout" => method.is_readout(),
        "prepare" => method.is_prep(),
        _ => !method.is_readout() && !method.is_prep(),
    };
    if !fits {
        bail!("method `{name}` does not belong to `{verb}`");
    }
    Ok(method)
}

fn run(verb: &str, args: RunArgs) -> Result<bool> {
    let method = resolve_method(verb, &args.method)?;
    let inputs: Vec<PathBuf> = match (&args.a, &args.b, &args.x) {
        (Some(a), Some(b), None) if !method.is_prep() => vec![a.clone(), b.clone()],
        (None, None, Some(x)) if method.is_prep() => vec![x.clone()],
        (None, None, None) => Vec::new(),
        _ => bail!("`{verb}` takes --a/--b for matrix methods or --x for preparation"),
    };
    let cfg = ExperimentConfig {
        method,
        eps: args.eps,
        phase_bits: args.phase_bits,
        seed: args.seed,
        strict_support: args.strict_support,
        exact_phase: args.exact_phase,
        inputs,
        size: args.size,
        kappa: args.kappa,
    };
    let table = match &args.seeds {
        Some(seeds) => run_batch(&cfg, seeds)?,
        None => run_experiment(&cfg)?,
    };
    if let Some(path) = &args.entries {
        let out = table.rows.first().and_then(|r| r.output.as_ref()).context("run produced no output")?;
        std::fs::write(path, matrix_to_csv(out)).with_context(|| format!("writing {}", path.display()))?;
    }
    write_table(&table, &args.common)?;
    for row in table.violations() {
        eprintln!("bound violated: {} (realized {:.3e} > bound {:.3e})", row.descriptor, row.realized_error, row.bound);
    }
    Ok(table.all_passed())
}

fn write_table(table: &ReportTable, common: &Common) -> Result<()> {
    let text = match common.format {
        Format::Json => table.to_json()?,
        Format::Csv => table.to_csv()?,
    };
    emit(&text, common.out.as_deref())
}

fn scaling(args: ScalingArgs) -> Result<bool> {
    let spec = ScalingSpec {
        method: args.method.parse()?,
        n_grid: args.n_grid,
        eps_grid: args.eps_grid,
        kappa_grid: args.kappa_grid,
        seeds: args.seeds,
        metric: args.metric.as_deref().map(str::parse::<CostMetric>).transpose()?,
        phase_bits: args.phase_bits,
    };
    let study = scaling_study(&spec)?;
    let text = match args.common.format {
        Format::Json => serde_json_pretty(&study)?,
        Format::Csv => study.cells_csv()?,
    };
    emit(&text, args.common.out.as_deref())?;
    for (name, fit) in [("1/eps", &study.slope_inv_eps), ("n", &study.slope_n), ("kappa", &study.slope_kappa)] {
        if let Some(f) = fit {
            let ci = match (f.ci_low, f.ci_high) {
                (Some(lo), Some(hi)) => format!(" (95% CI {lo:.3}..{hi:.3})"),
                _ => String::new(),
            };
            eprintln!("slope vs {name} [{}]: {:.3}{ci} over {} points", f.regressor, f.slope, f.points);
        }
    }
    Ok(study.cells.iter().all(|c| c.passed))
}

fn serde_json_pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let summary = verify_report_file(&args.report)?;
    let text = match args.common.format {
        Format::Json => serde_json_pretty(&summary)?,
        Format::Csv => {
            let mut s = String::from("row,descriptor,reason\n");
            for v in &summary.violations {
                s.push_str(&format!("{},\"{}\",\"{}\"\n", v.row, v.descriptor, v.reason.replace('"', "'")));
            }
            s
        }
    };
    emit(&text, args.common.out.as_deref())?;
    if summary.passed() {
        eprintln!("verified {} row(s): pass", summary.checked);
    } else {
        for v in &summary.violations {
            eprintln!("FAIL row {} ({}): {}", v.row, v.descriptor, v.reason);
        }
    }
    Ok(summary.passed())
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}.csv"))
}

fn gen(args: GenArgs) -> Result<bool> {
    match args.kind {
        GenKind::Matrix => emit(&matrix_to_csv(&generate_matrix(args.size, args.kappa, args.seed)?), args.out.as_deref())?,
        GenKind::Vector => {
            let v = generate_vector(args.size, args.kappa, args.seed)?;
            emit(&matrix_to_csv(&DenseMatrix::from_real(v.len(), 1, &v)?), args.out.as_deref())?
        }
        GenKind::Pair => {
            let (a, b) = generate_pair(args.size, args.kappa, args.seed)?;
            match &args.out {
                Some(out) => {
                    emit(&matrix_to_csv(&a), Some(out))?;
                    emit(&matrix_to_csv(&b), Some(&sibling(out, "b")))?;
                }
                None => {
                    emit(&matrix_to_csv(&a), None)?;
                    println!();
                    emit(&matrix_to_csv(&b), None)?;
                }
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Multiply(a) => run("multiply", a),
        Command::Readout(a) => run("readout", a),
        Command::Prepare(a) => run("prepare", a),
        Command::Scaling(a) => scaling(a),
        Command::Verify(a) => verify(a),
        Command::Gen(a) => gen(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
