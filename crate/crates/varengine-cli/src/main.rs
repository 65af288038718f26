//! Command-line frontend: simulation to CSV, CSV ingestion, rolling
//! backtests, resampled experiments, network training with persistence,
//! and plot-data emission.

mod commands;
mod config;
mod data;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors split by exit code: bad invocations exit 2, runtime failures
/// (I/O, parsing, estimation) exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Usage(m) | Self::Domain(m) => f.write_str(m),
        }
    }
}

impl From<varengine::Error> for CliError {
    fn from(e: varengine::Error) -> Self {
        Self::Domain(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Domain(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Domain(format!("report serialization failed: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "varengine",
    version,
    about = "Value-at-risk estimation and backtesting engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a GARCH return series to CSV
    Simulate(commands::SimulateArgs),
    /// Roll estimators over a series and write a report
    Backtest(commands::BacktestArgs),
    /// Resampled-continuation comparison of estimators
    Experiment(commands::ExperimentArgs),
    /// Train the network estimator and persist the model
    Train(commands::TrainArgs),
    /// Convert a backtest report into plot-ready CSV
    Plotdata(commands::PlotdataArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Backtest(args) => commands::cmd_backtest(args),
        Command::Experiment(args) => commands::cmd_experiment(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Plotdata(args) => commands::cmd_plotdata(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
