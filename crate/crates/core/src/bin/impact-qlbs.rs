//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 model/runtime
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use impact_qlbs::harness::presets::{table_rows, Table};
use impact_qlbs::harness::validate::run_invariant_suite;
use impact_qlbs::harness::{emit_report, run_batch, write_summary, BatchOptions, BatchReport, ExperimentConfig};
use impact_qlbs::Error;

#[derive(Parser)]
#[command(
    name = "impact-qlbs",
    version,
    about = "FX put pricing and hedging under permanent market impact"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run(CommonArgs),
    /// Run `n_runs` independent experiments.
    Batch(CommonArgs),
    /// Thinness sweep with u in [-1, 1).
    Table2(CommonArgs),
    /// Thinness sweep with u in [-1.5, 1.5).
    Table3(CommonArgs),
    /// Sweep over counter-intuitive strategy ranges.
    Table4(CommonArgs),
    /// Sweep over market impact ranges.
    Table5(CommonArgs),
    /// Check model invariants on a small instance.
    Validate {
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of runs (overrides `n_runs`).
    #[arg(long)]
    runs: Option<usize>,
    /// Record failed runs and continue.
    #[arg(long)]
    skip_failed: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn resolve(args: &CommonArgs) -> Result<ExperimentConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Failure::Config(e.to_string()),
            other => Failure::from(other),
        })?,
        None => ExperimentConfig::default(),
    };
    config.apply_env()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(runs) = args.runs {
        config.n_runs = runs;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_batch(label: &str, report: &BatchReport) {
    println!(
        "{label:<16} runs={:<3} mse={:.12e} avg_Lp={:.12} avg_Lstar={:.12}",
        report.runs.len(),
        report.mse,
        report.avg_lp,
        report.avg_lstar
    );
    for failed in &report.failed_runs {
        eprintln!("  run {} (seed {}) failed: {}", failed.run, failed.seed, failed.error);
    }
}

fn batch(config: &ExperimentConfig, args: &CommonArgs, dir: &Path, label: &str) -> Result<BatchReport, Failure> {
    let report = run_batch(
        config,
        BatchOptions {
            skip_failed: args.skip_failed,
        },
    )?;
    if let Some(sample) = &report.sample {
        for w in &sample.fit_warnings {
            eprintln!("warning: {w}");
        }
    }
    emit_report(&report, dir)?;
    print_batch(label, &report);
    Ok(report)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => {
            let mut config = resolve(&args)?;
            config.n_runs = 1;
            let dir = config.output_dir.clone();
            batch(&config, &args, &dir, "run")?;
        }
        Command::Batch(args) => {
            let config = resolve(&args)?;
            let dir = config.output_dir.clone();
            batch(&config, &args, &dir, "batch")?;
        }
        Command::Table2(args) => table(Table::Table2, &args)?,
        Command::Table3(args) => table(Table::Table3, &args)?,
        Command::Table4(args) => table(Table::Table4, &args)?,
        Command::Table5(args) => table(Table::Table5, &args)?,
        Command::Validate { seed } => {
            let checks = run_invariant_suite(seed.unwrap_or(7))?;
            let mut failed = 0;
            for c in &checks {
                println!("[{}] {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Failure::Runtime(format!(
                    "{failed} of {} invariants failed",
                    checks.len()
                )));
            }
        }
    }
    Ok(())
}

fn table(table: Table, args: &CommonArgs) -> Result<(), Failure> {
    let base = resolve(args)?;
    let root = base.output_dir.join(table.name());
    let mut rows = Vec::new();
    for row in table_rows(table, &base) {
        let report = batch(&row.config, args, &root.join(&row.label), &row.label)?;
        rows.push((row.label, report));
    }
    write_summary(&rows, &root)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
