//! `rcr`: outlier rejection and robust model fitting for contaminated data.
//!
//! Four subcommands: `reject` runs the one-dimensional pipeline on a CSV
//! sample, `fit` runs the model-fitting pipeline, `calibrate` regenerates the
//! correction-factor table, and `simulate` writes labeled synthetic scenarios
//! for the other two. Reports are JSON (`rcr-report/1`), written atomically
//! when `--out` is given, with plot-ready CSV sidecars.

mod commands;
mod data;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rcr::{ContaminantSidedness, CoreShape, DistributionAssumption, RcrError};

/// Exit codes: 0 success, 2 argument error, 3 data error, 4 algorithm
/// failure.
pub const EXIT_ARGUMENT: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_ALGORITHM: u8 = 4;

#[derive(Parser)]
#[command(
    name = "rcr",
    version,
    about = "Robust Chauvenet Rejection: outlier rejection for heavily contaminated samples",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reject outliers from a one-dimensional sample (CSV with a `y` column,
    /// optional `w` weights and `sy` error bars).
    Reject(RejectArgs),
    /// Fit a model while rejecting outliers (CSV with `x`/`x1..xn` and `y`
    /// columns, optional `sy` and `w`).
    Fit(FitArgs),
    /// Regenerate the correction-factor table, or calibrate a single cell.
    Calibrate(CalibrateArgs),
    /// Write a labeled synthetic scenario CSV.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UncontaminatedArg {
    Symmetric,
    MildlyAsymmetric,
}

#[derive(Clone, Copy, ValueEnum)]
enum ContaminantsArg {
    TwoSided,
    OneSided,
    InBetween,
}

#[derive(Args)]
struct AssumptionArgs {
    /// Shape of the uncontaminated distribution.
    #[arg(long, value_enum, default_value = "symmetric")]
    uncontaminated: UncontaminatedArg,
    /// Sidedness of the contaminants.
    #[arg(long, value_enum, default_value = "two-sided")]
    contaminants: ContaminantsArg,
    /// Shorthand for both: e.g. `--assumption symmetric,one-sided`.
    #[arg(long, value_name = "CORE,CONTAMINANTS", conflicts_with_all = ["uncontaminated", "contaminants"])]
    assumption: Option<String>,
}

impl AssumptionArgs {
    fn resolve(&self) -> Result<DistributionAssumption, CliError> {
        if let Some(combined) = &self.assumption {
            let (core, contaminants) = combined.split_once(',').ok_or_else(|| {
                CliError::argument(format!(
                    "--assumption takes 'CORE,CONTAMINANTS', got '{combined}'"
                ))
            })?;
            let core = match core.trim() {
                "symmetric" => CoreShape::Symmetric,
                "mildly-asymmetric" => CoreShape::MildlyAsymmetric,
                other => {
                    return Err(CliError::argument(format!(
                        "unknown uncontaminated shape '{other}'"
                    )))
                }
            };
            let contaminants = match contaminants.trim() {
                "two-sided" => ContaminantSidedness::TwoSided,
                "one-sided" => ContaminantSidedness::OneSided,
                "in-between" => ContaminantSidedness::InBetween,
                other => {
                    return Err(CliError::argument(format!(
                        "unknown contaminant sidedness '{other}'"
                    )))
                }
            };
            return Ok(DistributionAssumption::new(core, contaminants));
        }
        let core = match self.uncontaminated {
            UncontaminatedArg::Symmetric => CoreShape::Symmetric,
            UncontaminatedArg::MildlyAsymmetric => CoreShape::MildlyAsymmetric,
        };
        let contaminants = match self.contaminants {
            ContaminantsArg::TwoSided => ContaminantSidedness::TwoSided,
            ContaminantsArg::OneSided => ContaminantSidedness::OneSided,
            ContaminantsArg::InBetween => ContaminantSidedness::InBetween,
        };
        Ok(DistributionAssumption::new(core, contaminants))
    }

    fn labels(&self) -> Result<(&'static str, &'static str), CliError> {
        let a = self.resolve()?;
        let core = match a.core {
            CoreShape::Symmetric => "symmetric",
            CoreShape::MildlyAsymmetric => "mildly-asymmetric",
        };
        let contaminants = match a.contaminants {
            ContaminantSidedness::TwoSided => "two-sided",
            ContaminantSidedness::OneSided => "one-sided",
            ContaminantSidedness::InBetween => "in-between",
        };
        Ok((core, contaminants))
    }
}

#[derive(Args)]
pub struct RejectArgs {
    /// Input CSV with a `y` column (optional `w`, `sy`).
    input: PathBuf,
    #[command(flatten)]
    assumption: AssumptionArgs,
    /// Echoed into the report; the pipeline itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Correction-table file (defaults to the built-in table).
    #[arg(long, env = "RCR_CORRECTION_TABLE", value_name = "PATH")]
    correction_table: Option<PathBuf>,
    /// Write the JSON report here (plus `.kept.csv` / `.deviations.csv`
    /// sidecars); stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    /// Input CSV with `x` (or `x1..xn`) and `y` columns (optional `sy`, `w`).
    input: PathBuf,
    /// Built-in model: linear, quadratic, power-law, exponential, sinusoid.
    #[arg(long)]
    model: String,
    /// Pivot override for models that use one (default: weighted mean of x).
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    pivot: Option<f64>,
    #[command(flatten)]
    assumption: AssumptionArgs,
    /// Seed for weighted tuple sampling past the enumeration budget.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "RCR_CORRECTION_TABLE", value_name = "PATH")]
    correction_table: Option<PathBuf>,
    /// Write the JSON report here (plus an `.ensemble.csv` sidecar); stdout
    /// when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TechniqueArg {
    Stddev,
    Percentile,
    Linefit,
    Brokenline,
}

#[derive(Clone, Copy, ValueEnum)]
enum MuArg {
    Mean,
    Median,
    Mode,
}

#[derive(Clone, Copy, ValueEnum)]
enum SidednessArg {
    Two,
    One,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Output table path. Required for a full regeneration.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 20_260_808)]
    seed: u64,
    /// Single-cell mode: trial count (>= 1000). Full mode: per-cell draw
    /// budget.
    #[arg(long)]
    trials: Option<u64>,
    /// Calibrate a single (technique, n) cell instead of the full grid.
    #[arg(long, value_enum)]
    technique: Option<TechniqueArg>,
    /// Sample size for single-cell mode.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Center statistic for single-cell mode (default: mean for stddev,
    /// median otherwise).
    #[arg(long, value_enum)]
    mu: Option<MuArg>,
    /// Deviation sidedness for single-cell mode.
    #[arg(long, value_enum, default_value = "two")]
    sidedness: SidednessArg,
    /// Model parameter count for a DOF-adjusted single cell (default 1).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    m: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Fig3,
    Fig4,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Replace,
    Add,
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let f: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..1.0).contains(&f) {
        Ok(f)
    } else {
        Err(format!("contamination fraction must lie in [0, 1), got {f}"))
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Named scenario; overrides the custom flags below.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Sample size for custom scenarios.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Contamination fraction in [0, 1); defaults to the preset's fraction,
    /// or 0.5 for custom scenarios.
    #[arg(long, value_parser = parse_fraction)]
    f: Option<f64>,
    #[arg(long, value_enum, default_value = "two-sided")]
    contaminants: ContaminantsArg,
    /// Core shape: gaussian, peaked, flat-topped or mildly-asymmetric.
    #[arg(long, default_value = "gaussian")]
    uncontaminated: String,
    /// Contaminant scale.
    #[arg(long, default_value_t = 10.0)]
    sigma2: f64,
    /// Symmetric share for in-between contaminants.
    #[arg(long, default_value_t = 0.5)]
    mix: f64,
    /// Whether contaminants replace values or add to them.
    #[arg(long, value_enum, default_value = "replace")]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

/// CLI error carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn argument(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_ARGUMENT,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_DATA,
        }
    }

    pub fn algorithm(message: impl Into<String>) -> Self {
        CliError {
            message: message.into(),
            code: EXIT_ALGORITHM,
        }
    }
}

impl From<RcrError> for CliError {
    fn from(err: RcrError) -> Self {
        let code = match &err {
            RcrError::AllRejected { .. }
            | RcrError::NonConverged { .. }
            | RcrError::NoValidTuples
            | RcrError::DegenerateTuple
            | RcrError::ZeroTotalWeight
            | RcrError::TooFewPointsForModel { .. }
            | RcrError::NoDegreesOfFreedom { .. } => EXIT_ALGORITHM,
            RcrError::InvalidScenario(_) | RcrError::InsufficientTrials { .. } => EXIT_ARGUMENT,
            _ => EXIT_DATA,
        };
        CliError {
            message: err.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::data(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Reject(args) => commands::reject(args),
        Command::Fit(args) => commands::fit(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Simulate(args) => commands::simulate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
