//! `nestocc`: simulate nested occupancy schemes, verify them against their
//! Gaussian limits and tabulate limit covariances.
//!
//! Exit codes: 0 success, 1 a verdict failed, 2 usage or configuration
//! error, 3 numeric failure (non-convergence, range, truncation budget).

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nested_occupancy::Executor;

use crate::config::Config;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<nested_occupancy::Error> for CliError {
    fn from(e: nested_occupancy::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    /// Brownian motion
    Bm,
    /// Riemann–Liouville process with exponent q
    Rl,
    /// Brownian motion run at clock s^q
    Tc,
}

#[derive(Parser)]
#[command(name = "nestocc", version, about = "Nested infinite occupancy simulator and limit verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; 1 runs sequentially, 0 uses all cores. Output does not depend on it.
    #[arg(long, global = true, env = "NESTOCC_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct LimitsArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long, value_enum, default_value_t = BaseArg::Bm)]
    pub base: BaseArg,
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated increasing grid in [0, 1].
    #[arg(long, value_delimiter = ',', default_value = "0.5,1")]
    pub grid: Vec<f64>,
    /// Highest level J.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    /// Number of sampled limit paths (0 for none).
    #[arg(long, default_value_t = 0)]
    pub paths: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate occupancy replicates and write the statistic CSVs.
    Simulate(RunArgs),
    /// Run a verification experiment; exit 1 if a verdict fails.
    Verify(RunArgs),
    /// Tabulate the limit covariance and optionally sample limit paths.
    Limits(LimitsArgs),
}

fn load(args: &RunArgs) -> Result<Config, CliError> {
    let mut cfg = Config::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let exec = Executor::with_threads(cli.threads);
    match &cli.command {
        Command::Simulate(args) => commands::simulate_cmd(&load(args)?, &args.out, cli.format, exec).map(|_| true),
        Command::Verify(args) => commands::verify_cmd(&load(args)?, &args.out, cli.format, exec),
        Command::Limits(args) => commands::limits_cmd(args, &args.out, args.seed, cli.format, exec).map(|_| true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("nestocc: {e}");
            ExitCode::from(e.code())
        }
    }
}
