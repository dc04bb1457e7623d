mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use proxpath::study::NuisanceMode;
use proxpath::EstimatorTag;

use crate::config::MapsChoice;

#[derive(Parser, Debug)]
#[command(name = "proxpath", version, about = "Proximal path-specific mediation estimation")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Shared {
    /// Input CSV.
    #[arg(long = "in", value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output path; a `<out>.meta.toml` sidecar is written next to it.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// TOML config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

fn parse_tag(s: &str) -> Result<EstimatorTag, String> {
    s.parse().map_err(|e: proxpath::Error| e.to_string())
}

fn parse_nuisance(s: &str) -> Result<NuisanceMode, String> {
    s.parse().map_err(|e: proxpath::Error| e.to_string())
}

#[derive(Args, Debug, Clone, Default)]
pub struct EstimationFlags {
    /// Comma-separated: por, pipw, phybrid1, phybrid2, quadr, dml.
    #[arg(long, value_delimiter = ',', value_parser = parse_tag)]
    pub estimators: Vec<EstimatorTag>,
    /// parametric | kernel
    #[arg(long, value_parser = parse_nuisance)]
    pub nuisance: Option<NuisanceMode>,
    /// Cross-fitting folds for dml.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Bootstrap resamples for the plug-in and quadR intervals.
    #[arg(long = "bootstrap-B", value_name = "B")]
    pub bootstrap_b: Option<usize>,
    /// Confidence level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Also estimate E[Y(1)] and the effect summaries.
    #[arg(long)]
    pub effects: bool,
    /// Parametric bridge maps.
    #[arg(long, value_enum)]
    pub maps: Option<MapsChoice>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from the synthetic design and record its oracle values.
    Simulate {
        #[command(flatten)]
        shared: Shared,
        /// Rows to draw.
        #[arg(long)]
        n: Option<usize>,
        /// Monte Carlo draws for the oracle.
        #[arg(long)]
        n_mc: Option<usize>,
        /// Use the binary-outcome variant of the design.
        #[arg(long)]
        binary: bool,
    },
    /// Fit the six bridges (plus the E[Y(1)] bridge) and write them as text.
    FitBridges {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, value_parser = parse_nuisance)]
        nuisance: Option<NuisanceMode>,
        #[arg(long, value_enum)]
        maps: Option<MapsChoice>,
    },
    /// Estimate ψ (and optionally the effects) on a CSV dataset.
    Estimate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        est: EstimationFlags,
    },
    /// Monte Carlo study over misspecification scenarios.
    Study {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        est: EstimationFlags,
        /// Comma-separated scenario numbers (1–5).
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<u8>,
        #[arg(long)]
        reps: Option<usize>,
        /// Sample size per replicate.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_mc: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Simulate { shared, n, n_mc, binary } => commands::simulate(&shared, n, n_mc, binary),
        Command::FitBridges { shared, nuisance, maps } => commands::fit_bridges(&shared, nuisance, maps),
        Command::Estimate { shared, est } => commands::estimate(&shared, &est),
        Command::Study { shared, est, scenarios, reps, n, n_mc } => commands::study(&shared, &est, scenarios, reps, n, n_mc),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
