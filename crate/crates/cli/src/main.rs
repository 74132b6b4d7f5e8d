//! `lrdecay`: reproducible learning-rate decay experiments.
//!
//! Every subcommand accepts `--config <json>` (flags override file values) and,
//! when it writes files, a manifest echoing the resolved configuration and the
//! SHA-256 of every input and output.

mod cmd;
mod config;
mod error;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Parser)]
#[command(
    name = "lrdecay",
    version,
    about = "Learning-rate decay dynamics laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a PS10 dataset file and its JSON sidecar
    GenPs10(cmd::gen::GenArgs),
    /// Train the MLP on PS10 under a constant, step or auto schedule
    Train(cmd::train::TrainArgs),
    /// Top Hessian eigenvalues of a trained model
    Spectrum(cmd::spectrum::SpectrumArgs),
    /// Gradient descent on a quadratic with the given spectrum
    Quadratic(cmd::spectrum::QuadraticArgs),
    /// Stage-wise transferability from an accuracy table or a run's snapshots
    Transfer(cmd::transfer::TransferArgs),
    /// Monte Carlo check of the bias-corrected moving average variance
    EdmaSim(cmd::edma_sim::EdmaSimArgs),
    /// Render CSV columns as an SVG line chart
    Plot(cmd::plot::PlotArgs),
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::GenPs10(a) => cmd::gen::run(a),
        Command::Train(a) => cmd::train::run(a),
        Command::Spectrum(a) => cmd::spectrum::run(a),
        Command::Quadratic(a) => cmd::spectrum::run_quadratic(a),
        Command::Transfer(a) => cmd::transfer::run(a),
        Command::EdmaSim(a) => cmd::edma_sim::run(a),
        Command::Plot(a) => cmd::plot::run(a),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on malformed arguments
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
