//! `waverec`: simulate time-domain wave data over a known coefficient,
//! reconstruct the coefficient from recorded traces, and evaluate a
//! reconstruction against the ground truth.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{error_code, run_evaluate, run_reconstruct, run_simulate, StageError};

#[derive(Parser)]
#[command(name = "waverec", about = "Acoustic coefficient reconstruction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward-solve the wave equation over the configured phantom and
    /// write traces, mesh, and truth files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the coefficient from a data directory produced by
    /// `simulate` and write per-interval fields plus metrics.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print metrics JSON comparing a reconstruction to the ground truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        recon: PathBuf,
        /// Geometry source; the built-in default geometry when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { config, out } => run_simulate(config, out),
        Command::Reconstruct { config, data, out } => run_reconstruct(config, data, out),
        Command::Evaluate { truth, recon, config } => {
            run_evaluate(truth, recon, config.as_ref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(StageError { stage, error }) => {
            let report = serde_json::json!({
                "stage": stage,
                "error": error_code(&error),
                "detail": error.to_string(),
            });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
