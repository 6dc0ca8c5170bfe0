//! `m2cmab`: generate traces, run the scheduler and baselines, drive
//! experiment matrices and export plot data.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "m2cmab",
    version,
    about = "Budget-constrained inference scheduling"
)]
struct Cli {
    /// Output directory; overrides the config file.
    #[arg(long, global = true, env = "M2CMAB_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic JSONL trace.
    GenTrace(commands::GenTraceArgs),
    /// Run one policy on one trace.
    Run(commands::RunArgs),
    /// Run an experiment matrix.
    Matrix(commands::MatrixArgs),
    /// Print the budget regimes of a trace.
    Regimes(commands::RegimesArgs),
    /// Flatten a matrix report into a tidy CSV.
    ExportPlots(commands::ExportArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = cli.output_dir;
    let result = match cli.command {
        Command::GenTrace(args) => commands::gen_trace(args, out),
        Command::Run(args) => commands::run(args, out),
        Command::Matrix(args) => commands::matrix(args, out),
        Command::Regimes(args) => commands::regimes(args, out),
        Command::ExportPlots(args) => commands::export_plots(args, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
