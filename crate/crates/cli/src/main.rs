//! `ustvol` command-line front end.
//!
//! Exit codes: 0 on success, 2 on validation failures (bad flags, inputs or
//! parameters), 1 on numerical failures. Errors are printed to stderr as a
//! single JSON object.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::Settings;

#[derive(Debug, Parser)]
#[command(name = "ustvol", version, about = "Ultra-short-tenor implied volatility toolkit")]
pub struct Cli {
  #[command(flatten)]
  pub global: Global,
  #[command(subcommand)]
  pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
  /// TOML configuration file; flags override its values.
  #[arg(long, global = true)]
  pub config: Option<PathBuf>,
  /// RNG seed for Monte Carlo and optimizer restarts.
  #[arg(long, global = true)]
  pub seed: Option<u64>,
  /// Worker threads (default: all cores).
  #[arg(long, global = true)]
  pub threads: Option<usize>,
  /// Frequency nodes of the Fourier integrals.
  #[arg(long, global = true)]
  pub fourier_nodes: Option<usize>,
  /// Fixed Fourier truncation bound (adaptive when absent).
  #[arg(long, global = true)]
  pub fourier_umax: Option<f64>,
  /// Manifest path (default: next to the first output file).
  #[arg(long, global = true)]
  pub manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
  /// Price a contract grid under a model.
  Price(commands::PriceArgs),
  /// Calibrate a model to a quote file.
  Calibrate(commands::CalibrateArgs),
  /// Bootstrap BS++ shifts from an ATM term structure.
  Bootstrap(commands::BootstrapArgs),
  /// Filter raw quotes into clean surfaces.
  Ingest(commands::IngestArgs),
  /// Time surface pricing across models.
  Bench(commands::BenchArgs),
  /// Simulate terminal log-returns.
  Simulate(commands::SimulateArgs),
  /// Short-tenor smile level, skew and convexity.
  SmileExpand(commands::SmileArgs),
  /// ATM term structure, market against fitted models.
  Termstructure(commands::TermArgs),
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
  Validation { kind: String, message: String },
  Numerical { kind: String, message: String },
}

impl CliError {
  pub fn validation(message: impl Into<String>) -> Self {
    CliError::Validation { kind: "invalid_input".into(), message: message.into() }
  }

  fn code(&self) -> u8 {
    match self {
      CliError::Validation { .. } => 2,
      CliError::Numerical { .. } => 1,
    }
  }

  fn to_json(&self) -> serde_json::Value {
    let (kind, message) = match self {
      CliError::Validation { kind, message } | CliError::Numerical { kind, message } => (kind, message),
    };
    json!({ "error": kind, "message": message, "exit_code": self.code() })
  }
}

impl From<ustvol::Error> for CliError {
  fn from(e: ustvol::Error) -> Self {
    let (kind, message) = (e.kind().to_string(), e.to_string());
    if e.is_validation() {
      CliError::Validation { kind, message }
    } else {
      CliError::Numerical { kind, message }
    }
  }
}

impl From<std::io::Error> for CliError {
  fn from(e: std::io::Error) -> Self {
    CliError::Validation { kind: "io".into(), message: e.to_string() }
  }
}

impl From<serde_json::Error> for CliError {
  fn from(e: serde_json::Error) -> Self {
    CliError::Validation { kind: "json".into(), message: e.to_string() }
  }
}

impl From<csv::Error> for CliError {
  fn from(e: csv::Error) -> Self {
    CliError::Validation { kind: "csv".into(), message: e.to_string() }
  }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
  let settings = Settings::resolve(&cli.global)?;
  if let Some(n) = settings.threads {
    // Fails only if a pool already exists, which cannot happen here.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
  }
  commands::dispatch(&cli, &settings)
}

fn main() -> ExitCode {
  let cli = match Cli::try_parse() {
    Ok(c) => c,
    Err(e) => {
      use clap::error::ErrorKind;
      if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        print!("{e}");
        return ExitCode::SUCCESS;
      }
      let err = CliError::Validation { kind: "usage".into(), message: e.to_string().trim().to_string() };
      eprintln!("{}", err.to_json());
      return ExitCode::from(err.code());
    }
  };
  match run(cli) {
    Ok(()) => ExitCode::SUCCESS,
    Err(e) => {
      eprintln!("{}", e.to_json());
      ExitCode::from(e.code())
    }
  }
}
