mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Context};

/// Epidemic forecasting pipeline: ingest regional case counts, train the
/// graph-network rate estimator, forecast daily infections, evaluate against
/// the standard SIR baseline, and track the reproduction number.
#[derive(Parser)]
#[command(name = "epiforecast", version)]
struct Cli {
    /// Run configuration (TOML)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Working directory for artifacts (overrides EPIFORECAST_WORKDIR and
    /// the config value)
    #[arg(long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the config, check input files, and probe the mobility
    /// consistency constraint
    ValidateConfig,
    /// Parse case/population/distance files into the interchange series
    Ingest {
        /// Override the synthetic removal rate (1/day)
        #[arg(long)]
        gamma0: Option<f64>,
        /// Override the 7-day case smoothing switch
        #[arg(long)]
        smoothing: Option<bool>,
    },
    /// Train the rate estimator on the ingested series
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Forecast daily new infections from the latest window
    Forecast {
        /// Forecast horizon in days
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=28))]
        horizon: Option<u64>,
        /// Checkpoint path (defaults to <workdir>/checkpoint.json)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rolling-origin evaluation with the standard SIR baseline
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reproduction-number track from the estimated rates
    R0 {
        /// Apply a 7-day centered moving average to the track
        #[arg(long)]
        smooth: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Usage("--config <FILE> is required".to_string()))?;
    let ctx = Context::new(&config_path, cli.workdir)?;
    match cli.command {
        Command::ValidateConfig => commands::cmd_validate_config(&ctx),
        Command::Ingest { gamma0, smoothing } => commands::cmd_ingest(&ctx, gamma0, smoothing),
        Command::Train {
            epochs,
            seed,
            learning_rate,
        } => commands::cmd_train(&ctx, epochs, seed, learning_rate),
        Command::Forecast {
            horizon,
            checkpoint,
        } => commands::cmd_forecast(&ctx, horizon.map(|h| h as usize), checkpoint),
        Command::Evaluate { checkpoint } => commands::cmd_evaluate(&ctx, checkpoint),
        Command::R0 { smooth, checkpoint } => commands::cmd_r0(&ctx, smooth, checkpoint),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
