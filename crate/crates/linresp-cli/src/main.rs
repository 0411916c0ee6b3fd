//! `linresp`: runs one computation from a TOML config and writes CSV/JSON artifacts.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 invalid config or usage,
//! 3 model file missing, 4 computation or I/O error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use thiserror::Error;

use commands::{execute, Command};
use config::RunConfig;
use output::{RunRecord, Staging};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("ConfigInvalid: {0}")]
    ConfigInvalid(String),
    #[error("ModelFileMissing: {}", .0.display())]
    ModelFileMissing(PathBuf),
    #[error("CheckFailed: {0}")]
    CheckFailed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] linresp::lattice_model::ModelError),
    #[error(transparent)]
    FreeTheory(#[from] linresp::free_theory::FreeTheoryError),
    #[error(transparent)]
    ExactDiag(#[from] linresp::exact_diag::EdError),
    #[error(transparent)]
    Dynamics(#[from] linresp::adiabatic_dynamics::DynamicsError),
    #[error(transparent)]
    Response(#[from] linresp::response_formulas::ResponseError),
    #[error(transparent)]
    Reference(#[from] linresp::reference_model::ReferenceError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::ConfigInvalid(_) => 2,
            CliError::ModelFileMissing(_) => 3,
            _ => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "linresp", version, about = "Adiabatic linear response laboratory")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for scans and grid sums.
    #[arg(long)]
    jobs: Option<usize>,
    /// Multiplies every residual tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

fn run(cli: &Cli) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    let cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if !(cli.tolerance_scale > 0.0) {
        return Err(CliError::ConfigInvalid("--tolerance-scale must be positive".into()));
    }
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::ConfigInvalid("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
    }
    let tol = cfg.tolerances.scaled(cli.tolerance_scale);
    let mut staging = Staging::new(&cli.out)?;
    let checks = execute(cli.command, &cfg, &tol, &mut staging)?;
    let mut artifacts = staging.names();
    artifacts.push("run.json".into());
    let record = RunRecord {
        command: cli.command.name().into(),
        config_hash: cfg.hash(cli.command.name()),
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        checks,
        artifacts,
    };
    staging.json("run.json", &record)?;
    staging.commit()?;
    Ok(record)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(&cli).and_then(|record| {
        for c in &record.checks {
            println!("{} {} = {:.3e} (tolerance {:.3e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
        }
        if record.passed() {
            Ok(record)
        } else {
            let names: Vec<&str> = record.failing().iter().map(|c| c.name.as_str()).collect();
            Err(CliError::CheckFailed(names.join(", ")))
        }
    });
    match result {
        Ok(record) => {
            println!("{} ok, {} artifacts in {}", record.command, record.artifacts.len(), cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
