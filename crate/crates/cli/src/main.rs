//! `mrconformal` command-line interface.
//!
//! ```text
//! mrconformal simulate --settings S1,S3 --scenarios A --replicates 50 --out-dir results
//! mrconformal predict train.csv new.csv --outcome-column y --propensity X2 --outcome X1,X2,X3,X4
//! ```
//!
//! Exit codes: 0 success, 1 numerical failure (possibly partial), 2 usage
//! or input error.

mod config;
mod predict;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "mrconformal", version, about = "Multiple-robust conformal prediction with missing outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo study and write summary.csv and lengths.csv.
    Simulate(simulate::SimulateArgs),
    /// Fit on a training CSV and write intervals for the rows of a second CSV.
    Predict(predict::PredictArgs),
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to the built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct SharedArgs {
    /// Target coverage level in (0, 1) [default: 0.9]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Monte Carlo imputation draws per missing outcome [default: 100]
    #[arg(long = "T", value_name = "T")]
    pub n_draws: Option<usize>,
    /// Seed (the master seed for `simulate`)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Moment entry for complete cases in the calibration balancing
    #[arg(long, value_enum)]
    pub psi_variant: Option<PsiVariantArg>,
    /// How missing rows' imputed scores enter pooled quantities
    #[arg(long, value_enum)]
    pub score_imputation: Option<ScoreImputationArg>,
    /// Centering of imputed psi moment columns
    #[arg(long, value_enum)]
    pub psi_centering: Option<PsiCenteringArg>,
    /// Use the level ceil((n_eff + 1) tau) / n_eff in the final quantile
    #[arg(long)]
    pub finite_sample_correction: bool,
    /// TOML file with defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiVariantArg {
    Imputed,
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreImputationArg {
    PerDraw,
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiCenteringArg {
    FullSample,
    Pooled,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<mrconformal::Error> for Failure {
    fn from(e: mrconformal::Error) -> Self {
        use mrconformal::Error as E;
        match e {
            E::Fit(_) | E::Solver(_) | E::Convergence { .. } | E::Calibration(_) => Failure::Numerical(e.to_string()),
            E::Parse { .. } | E::Consistency { .. } | E::Argument(_) | E::Io(_) | E::Csv(_) => Failure::Usage(e.to_string()),
        }
    }
}

/// Outcome of a command that ran to completion.
pub enum Completion {
    Success,
    /// Outputs were written but some pieces hit numerical failures.
    Partial,
}

fn run(cli: Cli) -> Result<Completion, Failure> {
    match cli.command {
        Command::Simulate(args) => {
            let file = ConfigFile::load(args.shared.config.as_deref())?;
            simulate::run(&args, &file)
        }
        Command::Predict(args) => {
            let file = ConfigFile::load(args.shared.config.as_deref())?;
            predict::run(&args, &file)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Completion::Success) => ExitCode::SUCCESS,
        Ok(Completion::Partial) => ExitCode::from(1),
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
