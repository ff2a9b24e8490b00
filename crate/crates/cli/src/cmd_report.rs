//! `report`: re-render the plain-text report from a saved run.

use std::path::PathBuf;

use clap::Args;

use crate::errors::{CliError, Result};
use crate::store::{self, ReportsFile};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory holding reports.json from a flag run.
    #[arg(long)]
    pub out: PathBuf,
    /// Write the rendered text here instead of {out}/report.txt.
    #[arg(long)]
    pub to: Option<PathBuf>,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let path = args.out.join("reports.json");
    let file: ReportsFile = serde_json::from_slice(
        &std::fs::read(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?,
    )
    .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;

    let text = store::render_entries(&file.reports);
    let dest = args.to.clone().unwrap_or_else(|| args.out.join("report.txt"));
    store::atomic_write(&dest, text.as_bytes())?;
    print!("{text}");
    Ok(())
}
