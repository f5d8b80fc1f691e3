//! `shadow-merton`: solve the no-trade region, simulate the strategy,
//! evaluate it against benchmarks, and sweep cost levels.
//!
//! Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 provenance
//! mismatch, 5 failed acceptance flag.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] shadow_merton::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Acceptance(String),
    #[error("every sweep row failed")]
    AllRowsFailed,
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use shadow_merton::Error as E;
        match self {
            Self::Core(E::Validation(_) | E::Io(_) | E::Csv(_)) | Self::Usage(_) => 2,
            Self::Core(E::Solver(_)) | Self::AllRowsFailed => 3,
            // a solution file that no longer parses has been tampered with
            Self::Core(E::Provenance(_) | E::Json(_)) => 4,
            Self::Acceptance(_) => 5,
        }
    }
}

#[derive(Parser)]
#[command(name = "shadow-merton", version, about = "Log-utility investment with proportional costs via a shadow price")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the free-boundary problem and write the solution file.
    Solve(SolveArgs),
    /// Simulate the reflected process and the strategy along seeded paths.
    Simulate(SimulateArgs),
    /// Estimate utility and check it against the benchmarks.
    Evaluate(EvaluateArgs),
    /// Solve for a list of cost levels and tabulate the boundaries.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_buy: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda_sell: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub endowment: Endowment,
    #[arg(long, default_value = "solution.json")]
    pub out: PathBuf,
}

/// Initial price and holdings; omitted values come from the solution file
/// (or the reference endowment when solving).
#[derive(Args, Clone, Copy, Default)]
pub struct Endowment {
    #[arg(long, allow_hyphen_values = true)]
    pub s0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta_b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta_s: Option<f64>,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub paths: u64,
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: f64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub endowment: Endowment,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// One summary row per path instead of per-path time series.
    #[arg(long)]
    pub aggregate: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Relative edge shifts; each value is applied with both signs.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub perturb: Vec<f64>,
    /// Cross-check the boundaries with the dynamic-programming oracle.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 400)]
    pub oracle_grid: usize,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Cost levels applied to both sides.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "lambda_pairs")]
    pub lambdas: Vec<f64>,
    /// CSV file of `lambda_buy,lambda_sell` rows.
    #[arg(long)]
    pub lambda_pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 0.08, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.3, allow_hyphen_values = true)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SHADOW_MERTON_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SHADOW_MERTON_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
