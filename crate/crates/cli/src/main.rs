//! Command-line pipeline around the balance-point library.
//!
//! The subcommands chain into a full workflow: `synth` writes a city with
//! known ground truth, `fit` draws per-building posterior samples,
//! `baseline` runs the least-squares reference fits, `flag` ranks each home
//! against its comparison population and names probable faults, and
//! `report` re-renders the text report from saved outputs.
//!
//! Failures print one JSON object to stderr and exit with 2 for bad input,
//! 3 for convergence failures under `--strict`, or 4 when a cohort search
//! cannot reach its minimum size.

mod cmd_baseline;
mod cmd_fit;
mod cmd_flag;
mod cmd_report;
mod cmd_synth;
mod config;
mod errors;
mod store;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "balancepoint",
    version,
    about = "Fit balance-point energy models and rank building inefficiency"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city and its ground truth.
    Synth(cmd_synth::SynthArgs),
    /// Draw posterior parameter samples for every building.
    Fit(cmd_fit::FitArgs),
    /// Run the deterministic least-squares baseline fits.
    Baseline(cmd_baseline::BaselineArgs),
    /// Rank homes and report probable inefficiency faults.
    Flag(cmd_flag::FlagArgs),
    /// Re-render the text report from saved outputs.
    Report(cmd_report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => cmd_synth::run(args),
        Command::Fit(args) => cmd_fit::run(args),
        Command::Baseline(args) => cmd_baseline::run(args),
        Command::Flag(args) => cmd_flag::run(args),
        Command::Report(args) => cmd_report::run(args),
    };
    if let Err(e) = result {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit);
    }
}
