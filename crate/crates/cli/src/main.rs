//! `tdcox`: fit, cross-validate and apply penalized Cox models on
//! counting-process survival data.

mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tdcox::CoxError;

#[derive(Debug, Parser)]
#[command(name = "tdcox", version, about = "Penalized Cox models for time-dependent covariates")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Directory receiving the output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for fold assignment and simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for cross-validation and multi-alpha paths.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress the human-readable summary and progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
}

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate counting-process data with the permutational algorithm.
    Simulate(SimulateArgs),
    /// Fit one (alpha, lambda) pair.
    Fit(FitArgs),
    /// Fit the whole lambda grid for one or more alphas.
    Path(PathArgs),
    /// Cross-validate over alphas and lambda grids.
    Cv(CvArgs),
    /// Survival curves for new subjects from a stored fit.
    Predict(PredictArgs),
    /// Harrell's C of a stored fit on (held-out) data.
    Concordance(ConcordanceArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Convergence tolerance on the relative coefficient change.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Fit on the raw covariates instead of standardized ones.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// JSON file holding a complete simulation config; flags are ignored
    /// except `--seed`, which overrides the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 120)]
    pub n_subjects: usize,
    #[arg(long, default_value_t = 10.0)]
    pub max_time: f64,
    #[arg(long, default_value_t = 900)]
    pub n_fixed: usize,
    #[arg(long, default_value_t = 100)]
    pub n_td: usize,
    #[arg(long, default_value_t = 0.2)]
    pub event_rate: f64,
    /// Comma-separated effects, fixed covariates first. Drawn uniformly from
    /// `[effect_low, effect_high)` when absent.
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub effect_low: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub effect_high: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub lambda: f64,
    /// Report standardized-scale coefficients in `coefficients`.
    #[arg(long)]
    pub standardized_coefs: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, default_value_t = 100)]
    pub nlambda: usize,
    /// Fraction of the grid (from the largest lambda down) that is fitted.
    #[arg(long, default_value_t = 1.0)]
    pub lamfract: f64,
    /// Ratio of smallest to largest lambda; defaults by data shape.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PathArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub alphas: Vec<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// vv, basic or cindex.
    #[arg(long, default_value = "vv")]
    pub metric: String,
    /// Refit the full-data path at the selected alpha and write path.csv.
    #[arg(long)]
    pub refit: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    /// fit.json written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Training data the fit came from (for the baseline hazard).
    #[arg(long)]
    pub data: PathBuf,
    /// One row per new subject.
    #[arg(long)]
    pub newdata: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConcordanceArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Model(CoxError),
    Input { path: PathBuf, source: std::io::Error },
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, source: std::io::Error) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Model(e) if e.is_validation() => 2,
            CliError::Model(_) | CliError::Output { .. } => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Input { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            CliError::Output { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl From<CoxError> for CliError {
    fn from(e: CoxError) -> Self {
        CliError::Model(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
