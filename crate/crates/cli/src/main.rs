//! `mlcvqkd` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{OutputFormat, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mlcvqkd",
    version,
    about = "ML-CVQKD simulation: channel, state learning, metrics and key rates"
)]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for tabular results (overrides the config).
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Transmit a population of constellation states and write the phase-space samples.
    Simulate,
    /// Run state learning and write the trained classifier and its evaluation.
    Learn,
    /// Run state prediction with a trained classifier and write the session transcript.
    Predict {
        /// Classifier JSON written by `learn`.
        #[arg(long)]
        classifier: PathBuf,
    },
    /// Sweep learning quality over a (V_m, distance) grid.
    Evaluate,
    /// Key rate against distance for each configured protocol.
    Keyrate,
    /// Optimal modulation variance against distance.
    Optimize,
    /// Intercept-resend demonstration with the built-in encoding rules.
    AttackDemo,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error {0}")]
    Config(String),
    #[error("{}: {}", .0.display(), .1)]
    File(PathBuf, std::io::Error),
    #[error(transparent)]
    Core(#[from] mlcvqkd::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use mlcvqkd::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidParameter(_)) => 2,
            CliError::Core(E::NumericalDomain { .. }) => 3,
            CliError::Core(E::LearningRejected { .. }) => 4,
            CliError::File(..) | CliError::Core(_) => 1,
        }
    }
}

fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(format) = cli.format {
        cfg.format = format;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli)?;
    commands::prepare_output(&cfg)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Learn => commands::learn(&cfg),
        Command::Predict { classifier } => commands::predict(&cfg, &classifier),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Keyrate => commands::keyrate(&cfg),
        Command::Optimize => commands::optimize(&cfg),
        Command::AttackDemo => commands::attack_demo(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
