//! `tailcal`: simulate synthetic forecasters, run tail-calibration
//! diagnostics and tests on forecast datasets, fit EMOS models and
//! regenerate the figure data.
//!
//! Exit codes: 0 on success, 1 when a diagnostic was degenerate (outputs may
//! be partial), 2 on usage, parse or input errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tailcal::harness::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "tailcal", version, about = "Tail-calibration diagnostics for probabilistic forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic forecasting scenario and write one JSON-lines
    /// dataset per forecaster.
    Simulate(SimulateArgs),
    /// Combined, severity and occurrence diagnostics with CSV and SVG output.
    Diagnose(DiagnoseArgs),
    /// KS test of excess PITs or binomial test of exceedance counts.
    Test(TestArgs),
    /// Fit or apply a CRPS-minimizing EMOS model.
    #[command(subcommand)]
    Emos(EmosCommand),
    /// Regenerate the data and plots behind a figure.
    Repro(ReproArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// exponential-trio, misinformed, tail-unfocused, uniform-unfocused,
    /// nonrandom-tailmatch, optimistic, normal-quartet or gpd-pair.
    scenario: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gamma-mixing parameter (default 0.25).
    #[arg(long)]
    gamma: Option<f64>,
    /// Extremist inflation factor (default 1.4).
    #[arg(long)]
    nu: Option<f64>,
    /// Observation GPD shape (default 0.25).
    #[arg(long)]
    xi: Option<f64>,
    /// Forecast GPD shape (default 0.25).
    #[arg(long)]
    eta: Option<f64>,
    /// Forecast GPD scale (default 1).
    #[arg(long)]
    sigma_f: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "tailcal-sim")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// JSON-lines dataset, or ensemble CSV with columns y, m1..mK.
    dataset: PathBuf,
    /// Thresholds as empirical quantile levels of the observations.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    threshold_quantiles: Option<Vec<f64>>,
    /// Thresholds as raw values; combined with --threshold-quantiles.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    thresholds: Option<Vec<f64>>,
    /// Quantile levels for the occurrence and sup-distance series
    /// (default: the curve thresholds).
    #[arg(long, value_delimiter = ',')]
    series_quantiles: Option<Vec<f64>>,
    #[arg(long, default_value_t = 101)]
    grid_points: usize,
    /// Covariate used for quantile binning.
    #[arg(long, requires = "bins")]
    bin_covariate: Option<String>,
    #[arg(long, requires = "bin_covariate")]
    bins: Option<usize>,
    /// Confidence level of the delta-method bands, e.g. 0.95.
    #[arg(long)]
    ci: Option<f64>,
    /// Also write the marginal tail calibration curve.
    #[arg(long)]
    marginal: bool,
    /// Seed for randomized PITs of forecasts with atoms.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_plots: bool,
    #[arg(long)]
    title: Option<String>,
    #[arg(long, default_value = "tailcal-diagnose")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum TestKind {
    Ks,
    Binomial,
}

#[derive(Debug, Args)]
struct TestArgs {
    dataset: PathBuf,
    #[arg(long, value_enum)]
    kind: TestKind,
    /// Threshold value.
    #[arg(long, conflicts_with = "threshold_quantile", required_unless_present = "threshold_quantile")]
    threshold: Option<f64>,
    /// Threshold as an empirical quantile level of the observations.
    #[arg(long)]
    threshold_quantile: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report.json and the manifest; the report is always
    /// printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum EmosCommand {
    /// Fit coefficients by minimizing the mean training CRPS.
    Fit(EmosFitArgs),
    /// Write the predictive distributions for a dataset of ensembles.
    Predict(EmosPredictArgs),
}

#[derive(Debug, Args)]
struct EmosFitArgs {
    /// Training data whose forecasts are ensembles (JSON lines or CSV).
    training: PathBuf,
    /// censored_logistic or censored_gev.
    #[arg(long, default_value = "censored_logistic")]
    family: String,
    #[arg(long, default_value_t = 0.0)]
    censor_point: f64,
    /// Initial a,b,c,d (and GEV shape).
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<f64>>,
    /// Maximum number of objective evaluations.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    /// Model file; the manifest goes next to it.
    #[arg(long, default_value = "emos-model.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EmosPredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset of ensemble forecasts.
    data: PathBuf,
    /// Output JSON-lines dataset; the manifest goes next to it.
    #[arg(long, default_value = "emos-predictions.jsonl")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReproArgs {
    /// Figure identifier; run with --list to see them.
    #[arg(required_unless_present = "list")]
    figure: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    list: bool,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Degenerate(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_degenerate() {
            CliError::Degenerate(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Diagnose(args) => commands::diagnose(args),
        Command::Test(args) => commands::test(args),
        Command::Emos(EmosCommand::Fit(args)) => commands::emos_fit(args),
        Command::Emos(EmosCommand::Predict(args)) => commands::emos_predict(args),
        Command::Repro(args) => commands::repro(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Degenerate(msg)) => {
            eprintln!("tailcal: degenerate diagnostic: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("tailcal: error: {msg}");
            ExitCode::from(2)
        }
    }
}
