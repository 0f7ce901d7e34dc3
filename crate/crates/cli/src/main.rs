//! `qfp`: configuration-driven scenario runner.
//!
//! Exit codes: 0 success, 1 failed checks or numerical failure, 2 config or
//! usage error. `matrix` exits with the number of failed scenarios, capped
//! at 125.

mod config;
mod report;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::{Overrides, ScenarioConfig};
use report::{write_json, MatrixRow, MatrixSummary, MATRIX_SCHEMA};

#[derive(Parser)]
#[command(name = "qfp", version, about = "Quantum Fokker-Planck scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario config and classify its parameters.
    Validate(CommonArgs),
    /// Run one scenario.
    Run(CommonArgs),
    /// Run every *.toml / *.json scenario in a directory.
    Matrix(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file, or a directory of them for `matrix`.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the Fock truncation.
    #[arg(long)]
    n: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            n: self.n,
        }
    }
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const MAX_FAILURE_CODE: usize = 125;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Validate(args) | Command::Run(args) | Command::Matrix(args)) = &cli.command;
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match &cli.command {
        Command::Validate(args) => validate(args),
        Command::Run(args) => run(args),
        Command::Matrix(args) => matrix(args),
    }
}

fn load(path: &Path, overrides: Overrides) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    cfg.apply(overrides);
    cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

fn validate(args: &CommonArgs) -> ExitCode {
    let cfg = match load(&args.config, args.overrides()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let p = cfg.params;
    let class = p.classification();
    println!("scenario {}: delta = {:e}, classification {class:?}", cfg.name(), p.delta());
    if class == qfp_core::Classification::Invalid {
        ExitCode::from(EXIT_FAILED)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(args: &CommonArgs) -> ExitCode {
    let cfg = match load(&args.config, args.overrides()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("qfp-out").join(cfg.name()));
    match scenario::run(&cfg, &out) {
        Ok(outcome) => {
            print!("{}", outcome.report.markdown());
            if let Some(e) = &outcome.report.error {
                eprintln!("error: {e}");
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}

fn scenario_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("toml" | "json")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no *.toml or *.json scenarios in {}", dir.display());
    }
    Ok(files)
}

fn matrix(args: &CommonArgs) -> ExitCode {
    let files = match scenario_files(&args.config) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("qfp-out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: creating {}: {e}", out.display());
        return ExitCode::from(EXIT_FAILED);
    }
    let overrides = args.overrides();
    let rows: Vec<MatrixRow> = files
        .par_iter()
        .map(|path| {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let result = load(path, overrides).and_then(|cfg| scenario::run(&cfg, &out.join(&stem)));
            match result {
                Ok(o) => MatrixRow {
                    scenario: stem,
                    passed: o.passed(),
                    failed_checks: o.report.failed_checks() + o.timing.checks.iter().filter(|c| !c.passed).count(),
                    error: o.report.error.clone(),
                },
                Err(e) => MatrixRow {
                    scenario: stem,
                    passed: false,
                    failed_checks: 0,
                    error: Some(format!("{e:#}")),
                },
            }
        })
        .collect();
    let failures = rows.iter().filter(|r| !r.passed).count();
    let summary = MatrixSummary {
        schema: MATRIX_SCHEMA.into(),
        scenarios: rows,
        failures,
    };
    print!("{}", summary.table());
    if let Err(e) = write_json(&out.join("matrix.json"), &summary) {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(failures.min(MAX_FAILURE_CODE) as u8)
}
