//! On-disk layout shared by the pipeline stages.
//!
//! Posterior draws for a building live under `posteriors/` as
//! `{name}.csv` (one draw per row, chains concatenated) with the sampler
//! metadata and convergence diagnostics alongside in `{name}.diag.json`,
//! where `{name}` is the building id with every character outside
//! `[A-Za-z0-9._-]` replaced by `_`. All writes here go through a temp file
//! and rename, so a rerun never leaves a half-written artifact behind.
//!
//! Draws are stored in intensity units (per square foot): the fit stage
//! divides the baseload, both slopes, and the noise scale by floor area
//! before writing, which makes posteriors comparable across homes and
//! consistent with the annual-record solutions used in region mode.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use balancepoint_core::bayes::{Diagnostics, PosteriorSamples};
use balancepoint_core::faults::{EfficiencyFlags, FaultKind};
use balancepoint_core::{Error, ParamPoint};
use serde::{Deserialize, Serialize};

use crate::errors::{CliError, Result};

pub const POSTERIOR_COLUMNS: &str = "base,gamma_heat,gamma_cool,t_heat,t_cool,sigma";

/// FNV-1a over the building id, folded with the run seed. Stable across
/// runs and platforms, so refits of one building reproduce exactly.
pub fn building_seed(run_seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in id.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ run_seed
}

/// Filesystem-safe version of a building id.
pub fn safe_name(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        return "_".to_string();
    }
    s
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut name = path
        .file_name()
        .ok_or_else(|| CliError::input(format!("{}: not a file path", path.display())))?
        .to_os_string();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    fs::write(&tmp, bytes).map_err(|e| CliError::input(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Sampler metadata written next to each posterior CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorMeta {
    pub building_id: String,
    pub seed: u64,
    pub chains: usize,
    pub burn_in: usize,
    pub samples_per_chain: usize,
    pub diagnostics: Diagnostics,
}

fn csv_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{}.csv", safe_name(id)))
}

fn meta_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{}.diag.json", safe_name(id)))
}

pub fn has_posterior(dir: &Path, id: &str) -> bool {
    csv_path(dir, id).exists() && meta_path(dir, id).exists()
}

pub fn write_posterior(dir: &Path, id: &str, samples: &PosteriorSamples) -> Result<()> {
    let mut buf = String::with_capacity(64 * (samples.draws.len() + 1));
    buf.push_str(POSTERIOR_COLUMNS);
    buf.push('\n');
    for p in &samples.draws {
        let _ = writeln!(
            buf,
            "{},{},{},{},{},{}",
            p.base,
            p.gamma_heat,
            p.gamma_cool,
            p.t_heat,
            p.t_cool,
            p.sigma.unwrap_or(f64::NAN)
        );
    }
    atomic_write(&csv_path(dir, id), buf.as_bytes())?;

    let meta = PosteriorMeta {
        building_id: id.to_string(),
        seed: samples.seed,
        chains: samples.chains,
        burn_in: samples.burn_in,
        samples_per_chain: samples.chain_len(),
        diagnostics: samples.diagnostics.clone(),
    };
    atomic_write(&meta_path(dir, id), &pretty_json(&meta)?)?;
    Ok(())
}

pub fn read_posterior(dir: &Path, id: &str) -> Result<PosteriorSamples> {
    let csv = csv_path(dir, id);
    let meta = meta_path(dir, id);
    if !csv.exists() || !meta.exists() {
        return Err(Error::MissingPosterior { id: id.to_string() }.into());
    }

    let text = fs::read_to_string(&csv).map_err(|e| CliError::input(format!("{}: {e}", csv.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == POSTERIOR_COLUMNS => {}
        _ => {
            return Err(CliError::input(format!(
                "{}: expected posterior header `{POSTERIOR_COLUMNS}`",
                csv.display()
            )))
        }
    }
    let mut draws = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut vals = [0.0f64; 6];
        let mut parts = line.split(',');
        for v in &mut vals {
            let field = parts.next().ok_or_else(|| {
                CliError::input(format!("{}: row {}: expected 6 fields", csv.display(), i + 2))
            })?;
            *v = field.parse().map_err(|_| {
                CliError::input(format!("{}: row {}: bad number `{field}`", csv.display(), i + 2))
            })?;
        }
        if parts.next().is_some() {
            return Err(CliError::input(format!(
                "{}: row {}: expected 6 fields",
                csv.display(),
                i + 2
            )));
        }
        draws.push(ParamPoint {
            base: vals[0],
            gamma_heat: vals[1],
            gamma_cool: vals[2],
            t_heat: vals[3],
            t_cool: vals[4],
            sigma: if vals[5].is_nan() { None } else { Some(vals[5]) },
        });
    }

    let meta: PosteriorMeta = serde_json::from_slice(
        &fs::read(&meta).map_err(|e| CliError::input(format!("{}: {e}", meta.display())))?,
    )
    .map_err(|e| CliError::input(format!("{}: {e}", meta.display())))?;
    if meta.chains == 0 || meta.chains * meta.samples_per_chain != draws.len() {
        return Err(CliError::input(format!(
            "{}: {} draws do not match {} chains of {}",
            csv.display(),
            draws.len(),
            meta.chains,
            meta.samples_per_chain
        )));
    }
    Ok(PosteriorSamples {
        draws,
        chains: meta.chains,
        burn_in: meta.burn_in,
        seed: meta.seed,
        diagnostics: meta.diagnostics,
    })
}

/// One home's row in `reports.json`: the flags and probable faults, plus
/// whichever comparison evidence the mode produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub building_id: String,
    pub flags: EfficiencyFlags,
    pub faults: Vec<FaultKind>,
    /// Pairwise dominance wins per compared parameter (individual mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wins: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    /// Expanding-search cohort size (region mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doublings: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportsFile {
    pub mode: String,
    pub tau: f64,
    pub reports: Vec<ReportEntry>,
}

/// Render report entries as the plain-text report.
pub fn render_entries(entries: &[ReportEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "building {}", e.building_id);
        let active = e.flags.active();
        if active.is_empty() {
            let _ = writeln!(out, "  flags: none");
        } else {
            let names: Vec<&str> = active.iter().map(|k| k.as_str()).collect();
            let _ = writeln!(out, "  flags: {}", names.join(", "));
        }
        if e.faults.is_empty() {
            let _ = writeln!(out, "  probable faults: none");
        } else {
            let labels: Vec<&str> = e.faults.iter().map(|f| f.label()).collect();
            let _ = writeln!(out, "  probable faults: {}", labels.join(", "));
        }
        if let (Some(wins), Some(n)) = (&e.wins, e.group_size) {
            let parts: Vec<String> =
                wins.iter().map(|(p, w)| format!("{p} {w}/{}", n.saturating_sub(1))).collect();
            let _ = writeln!(out, "  dominance wins: {}", parts.join(", "));
        }
        if let Some(n) = e.cohort_size {
            let d = e.doublings.unwrap_or(0);
            let _ = writeln!(out, "  region cohort: {n} homes after {d} doublings");
        }
    }
    out
}

/// Pretty JSON with a trailing newline, for stable on-disk artifacts.
pub fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
