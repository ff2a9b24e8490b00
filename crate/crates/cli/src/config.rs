//! Run configuration.
//!
//! A run is described by a TOML file; any flag given explicitly on the
//! command line overrides the corresponding key. Missing sections fall back
//! to defaults, so the minimal individual-mode config is just the four paths
//! and a seed.
//!
//! ```toml
//! mode = "individual"
//! buildings = "city/buildings.csv"
//! energy = "city/energy.csv"
//! weather = "city/weather.csv"
//! out = "run1"
//! seed = 7
//!
//! [sensitivity]
//! tau = 0.75
//! ```

use std::path::{Path, PathBuf};

use balancepoint_core::bayes::SamplerConfig;
use balancepoint_core::faults::{Sensitivity, DEFAULT_CELL_M};
use balancepoint_core::ordering::BucketSpec;
use serde::{Deserialize, Serialize};

use crate::errors::{CliError, Result};

/// Which population a home is compared against in the flag stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Peer cohorts bucketed by type, vintage, and floor area.
    Individual,
    /// Region-wide parameter distribution from annual records.
    Region,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub buildings: Option<PathBuf>,
    pub energy: Option<PathBuf>,
    pub weather: Option<PathBuf>,
    pub annual: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Run seed; per-building sampler seeds are derived from it.
    pub seed: Option<u64>,
    /// Worker threads for the fit stage.
    pub jobs: usize,
    /// Fail instead of warn when a fitted building does not converge.
    pub strict: bool,
    /// Buildings with fewer aligned days than this are skipped, not fitted.
    pub min_coverage_days: usize,
    /// Cell size of the spatial inefficiency grid, meters.
    pub cell_m: f64,
    pub sampler: SamplerSettings,
    pub sensitivity: SensitivitySettings,
    pub buckets: BucketSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Individual,
            buildings: None,
            energy: None,
            weather: None,
            annual: None,
            out: None,
            seed: None,
            jobs: 1,
            strict: false,
            min_coverage_days: 300,
            cell_m: DEFAULT_CELL_M,
            sampler: SamplerSettings::default(),
            sensitivity: SensitivitySettings::default(),
            buckets: BucketSettings::default(),
        }
    }
}

/// Sampler knobs without the seed, which is always derived per building.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub chains: usize,
    pub burn_in: usize,
    /// Retained draws per chain.
    pub samples: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        let d = SamplerConfig::new(0);
        SamplerSettings { chains: d.chains, burn_in: d.burn_in, samples: d.samples }
    }
}

impl SamplerSettings {
    pub fn config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig { chains: self.chains, burn_in: self.burn_in, samples: self.samples, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySettings {
    pub tau: f64,
    pub t_heat_threshold: f64,
    pub t_cool_threshold: f64,
}

impl Default for SensitivitySettings {
    fn default() -> Self {
        let d = Sensitivity::default();
        SensitivitySettings {
            tau: d.tau,
            t_heat_threshold: d.t_heat_threshold,
            t_cool_threshold: d.t_cool_threshold,
        }
    }
}

impl SensitivitySettings {
    pub fn to_core(self) -> Sensitivity {
        Sensitivity {
            tau: self.tau,
            t_heat_threshold: self.t_heat_threshold,
            t_cool_threshold: self.t_cool_threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BucketSettings {
    pub year_width: i32,
    pub area_width: f64,
    pub min_cohort: usize,
}

impl Default for BucketSettings {
    fn default() -> Self {
        let d = BucketSpec::default();
        BucketSettings { year_width: d.year_width, area_width: d.area_width, min_cohort: d.min_cohort }
    }
}

impl BucketSettings {
    pub fn to_core(self) -> BucketSpec {
        BucketSpec {
            year_width: self.year_width,
            area_width: self.area_width,
            min_cohort: self.min_cohort,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
        }
    }
}

/// Resolve a required input path and check it exists up front.
pub fn require_input(field: &str, v: Option<&PathBuf>) -> Result<PathBuf> {
    match v {
        Some(p) if p.exists() => Ok(p.clone()),
        Some(p) => Err(CliError::input(format!("{field} path {} does not exist", p.display()))),
        None => Err(CliError::input(format!(
            "no {field} path given; pass --{field} or set `{field}` in the config"
        ))),
    }
}

pub fn require_out(v: Option<&PathBuf>) -> Result<PathBuf> {
    v.cloned()
        .ok_or_else(|| CliError::input("no output directory given; pass --out or set `out` in the config"))
}

pub fn require_seed(v: Option<u64>) -> Result<u64> {
    v.ok_or_else(|| CliError::input("no seed given; pass --seed or set `seed` in the config"))
}
