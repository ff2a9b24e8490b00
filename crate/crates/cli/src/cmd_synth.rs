//! `synth`: generate a synthetic city and its ground truth.

use std::fs;
use std::path::PathBuf;

use balancepoint_core::ingest;
use balancepoint_core::synth::{generate, SynthSpec};
use clap::Args;

use crate::errors::{CliError, Result};
use crate::store;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Generator spec TOML.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::input(format!("{}: {e}", args.spec.display())))?;
    let spec: SynthSpec =
        toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", args.spec.display())))?;

    let data = generate(&spec)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::input(format!("{}: {e}", args.out.display())))?;
    ingest::write_buildings(&args.out.join("buildings.csv"), &data.buildings)?;
    ingest::write_energy(&args.out.join("energy.csv"), &data.energy)?;
    ingest::write_weather(&args.out.join("weather.csv"), &data.weather)?;
    ingest::write_annual(&args.out.join("annual.csv"), &data.annuals)?;
    store::atomic_write(&args.out.join("ground_truth.json"), &store::pretty_json(&data.truth)?)?;

    println!(
        "generated {} homes over {} days into {}",
        data.buildings.len(),
        data.weather.days.len(),
        args.out.display()
    );
    Ok(())
}
