//! Synthetic-population generation with ground truth, fault injection, and
//! scoring oracles.
//!
//! Homes draw per-square-foot parameters from configured normal
//! distributions, faults inflate the corresponding parameters, and daily
//! energy is the model prediction plus Gaussian noise. Everything is
//! deterministic per seed: the weather uses one RNG stream and every home
//! gets two private streams (parameters and noise), so changing one home's
//! draws cannot perturb another's.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::{EfficiencyFlags, FaultReport, FlagKind};
use crate::ingest::{AnnualRecord, BuildingRecord, DailySeries, PropertyType, WeatherSeries};
use crate::model::{energy_split, predict, ParamPoint};

/// Fault classes the generator can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedFault {
    Envelope,
    Heater,
    Ac,
    Appliance,
    Setpoint,
}

impl InjectedFault {
    pub const ALL: [InjectedFault; 5] = [
        InjectedFault::Envelope,
        InjectedFault::Heater,
        InjectedFault::Ac,
        InjectedFault::Appliance,
        InjectedFault::Setpoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InjectedFault::Envelope => "envelope",
            InjectedFault::Heater => "heater",
            InjectedFault::Ac => "ac",
            InjectedFault::Appliance => "appliance",
            InjectedFault::Setpoint => "setpoint",
        }
    }

    /// The flag evidence that marks this fault class as predicted. The
    /// flag-to-fault map is many-to-one (several flags implicate the
    /// envelope), so scoring keys on the flags the injection manipulates.
    pub fn predicted_by(self, flags: &EfficiencyFlags) -> bool {
        match self {
            InjectedFault::Envelope => flags.high_gamma_heat || flags.high_gamma_cool,
            InjectedFault::Heater => flags.high_gamma_heat,
            InjectedFault::Ac => flags.high_gamma_cool,
            InjectedFault::Appliance => flags.high_base,
            InjectedFault::Setpoint => flags.high_t_heat || flags.low_t_cool,
        }
    }
}

/// Mean and standard deviation of one generated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDist {
    pub mean: f64,
    pub sd: f64,
}

/// Per-home draw distributions. Energy parameters are per square foot; the
/// absolute model is the draw scaled by the home's floor area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistributions {
    pub base: ParamDist,
    pub gamma_heat: ParamDist,
    pub gamma_cool: ParamDist,
    pub t_heat: ParamDist,
    pub t_cool: ParamDist,
    pub floor_area: ParamDist,
}

impl ParameterDistributions {
    /// A plausible single-family population: about 7.5 kWh/day of baseload
    /// and 1 to 1.5 kWh per degree-day at 1500 sq.ft.
    pub fn typical() -> Self {
        ParameterDistributions {
            base: ParamDist { mean: 0.005, sd: 0.0005 },
            gamma_heat: ParamDist { mean: 0.0008, sd: 0.00008 },
            gamma_cool: ParamDist { mean: 0.0010, sd: 0.0001 },
            t_heat: ParamDist { mean: 62.0, sd: 1.0 },
            t_cool: ParamDist { mean: 74.0, sd: 1.0 },
            floor_area: ParamDist { mean: 1500.0, sd: 0.0 },
        }
    }
}

/// Named sinusoidal climates, or a weather CSV taken verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeatherProfile {
    Named(ProfileName),
    File { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    ColdTemperate,
    HotArid,
    Mild,
}

fn default_days() -> usize {
    365
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
}

/// Generator configuration; deserializes from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_homes: usize,
    pub weather_profile: WeatherProfile,
    pub parameter_distributions: ParameterDistributions,
    #[serde(default)]
    pub fault_rates: BTreeMap<InjectedFault, f64>,
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default = "default_days")]
    pub days: usize,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_homes < 1 {
            return Err(Error::BadSpec("n_homes must be at least 1".into()));
        }
        if self.days < 1 {
            return Err(Error::BadSpec("days must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::BadSpec(format!("noise_sd {} must be nonnegative", self.noise_sd)));
        }
        for (fault, &rate) in &self.fault_rates {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::BadSpec(format!(
                    "fault rate {rate} for {} must be in [0, 1]",
                    fault.as_str()
                )));
            }
        }
        let d = &self.parameter_distributions;
        for (name, dist) in [
            ("base", d.base),
            ("gamma_heat", d.gamma_heat),
            ("gamma_cool", d.gamma_cool),
            ("t_heat", d.t_heat),
            ("t_cool", d.t_cool),
            ("floor_area", d.floor_area),
        ] {
            if !(dist.sd >= 0.0 && dist.sd.is_finite() && dist.mean.is_finite()) {
                return Err(Error::BadSpec(format!("bad distribution for {name}")));
            }
        }
        if d.floor_area.mean <= 0.0 {
            return Err(Error::BadSpec("floor_area mean must be positive".into()));
        }
        Ok(())
    }
}

/// True generating state of one home. Parameters are absolute (kWh/day and
/// kWh/degree-day); divide by `floor_area` for intensity units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeTruth {
    pub building_id: String,
    /// Parameters before fault injection.
    pub pre_fault: ParamPoint,
    /// Effective generating parameters.
    pub params: ParamPoint,
    pub faults: Vec<InjectedFault>,
    pub floor_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub homes: Vec<HomeTruth>,
}

impl GroundTruth {
    pub fn home(&self, id: &str) -> Option<&HomeTruth> {
        self.homes.iter().find(|h| h.building_id == id)
    }
}

/// Everything a generated city consists of. The annual records carry the
/// noiseless decomposition of each home's year, suitable for region-mode
/// estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub buildings: Vec<BuildingRecord>,
    pub energy: Vec<DailySeries>,
    pub weather: WeatherSeries,
    pub annuals: Vec<AnnualRecord>,
    pub truth: GroundTruth,
}

const CITY_CENTER: (f64, f64) = (33.45, -112.07);

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn synth_weather(spec: &SynthSpec) -> Result<WeatherSeries> {
    let (mean, amplitude, noise_sd) = match &spec.weather_profile {
        WeatherProfile::File { file } => {
            return crate::ingest::load_weather(file);
        }
        WeatherProfile::Named(ProfileName::ColdTemperate) => (48.0, 26.0, 4.0),
        WeatherProfile::Named(ProfileName::HotArid) => (75.0, 18.0, 4.0),
        WeatherProfile::Named(ProfileName::Mild) => (62.0, 10.0, 3.0),
    };
    let mut rng = stream_rng(spec.seed, 0);
    let noise = Normal::new(0.0, noise_sd).unwrap();
    let days = (0..spec.days)
        .map(|d| {
            let phase = 2.0 * std::f64::consts::PI * d as f64 / 365.25;
            let t = mean - amplitude * phase.cos() + noise.sample(&mut rng);
            (spec.start_date + chrono::Days::new(d as u64), t.clamp(-60.0, 140.0))
        })
        .collect();
    Ok(WeatherSeries { days })
}

fn draw(rng: &mut ChaCha8Rng, d: ParamDist) -> f64 {
    Normal::new(d.mean, d.sd).unwrap().sample(rng)
}

fn inject(fault: InjectedFault, p: &mut ParamPoint, rng: &mut ChaCha8Rng) {
    match fault {
        InjectedFault::Envelope => {
            let factor = rng.random_range(1.5..2.5);
            p.gamma_heat *= factor;
            p.gamma_cool *= factor;
        }
        InjectedFault::Heater => {
            p.gamma_heat *= rng.random_range(1.5..2.5);
        }
        InjectedFault::Ac => {
            p.gamma_cool *= rng.random_range(1.5..2.5);
        }
        InjectedFault::Appliance => {
            p.base *= rng.random_range(1.5..2.0);
        }
        InjectedFault::Setpoint => {
            p.t_heat = (p.t_heat + rng.random_range(5.0..10.0)).min(100.0);
            p.t_cool = (p.t_cool - rng.random_range(5.0..10.0)).max(p.t_heat);
        }
    }
}

/// Generate a synthetic city: buildings, daily traces, weather, annual
/// records, and the ground truth behind them.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let weather = synth_weather(spec)?;

    let d = &spec.parameter_distributions;
    let mut buildings = Vec::with_capacity(spec.n_homes);
    let mut energy = Vec::with_capacity(spec.n_homes);
    let mut annuals = Vec::with_capacity(spec.n_homes);
    let mut homes = Vec::with_capacity(spec.n_homes);

    for i in 0..spec.n_homes {
        let id = format!("home{i:05}");
        let mut rng = stream_rng(spec.seed, 2 * i as u64 + 2);

        let base_psf = draw(&mut rng, d.base).max(1e-6);
        let gh_psf = draw(&mut rng, d.gamma_heat).max(0.0);
        let gc_psf = draw(&mut rng, d.gamma_cool).max(0.0);
        let t_heat = draw(&mut rng, d.t_heat).clamp(32.0, 100.0);
        let t_cool = draw(&mut rng, d.t_cool).clamp(32.0, 100.0).max(t_heat);
        let area = draw(&mut rng, d.floor_area).max(100.0);
        let lat = CITY_CENTER.0 + rng.random_range(-0.02..0.02);
        let lon = CITY_CENTER.1 + rng.random_range(-0.02..0.02);

        let pre_fault = ParamPoint {
            base: base_psf * area,
            gamma_heat: gh_psf * area,
            gamma_cool: gc_psf * area,
            t_heat,
            t_cool,
            sigma: None,
        };
        let mut params = pre_fault.clone();
        let mut faults = Vec::new();
        for &fault in &InjectedFault::ALL {
            let rate = spec.fault_rates.get(&fault).copied().unwrap_or(0.0);
            if rng.random::<f64>() < rate {
                inject(fault, &mut params, &mut rng);
                faults.push(fault);
            }
        }

        let mut noise_rng = stream_rng(spec.seed, 2 * i as u64 + 3);
        let noise = Normal::new(0.0, spec.noise_sd).unwrap();
        let predicted = predict(&params, &weather);
        let days: Vec<(NaiveDate, f64)> = predicted
            .days
            .iter()
            .map(|&(date, kwh)| (date, (kwh + noise.sample(&mut noise_rng)).max(0.0)))
            .collect();

        let split = energy_split(&params, &weather);
        annuals.push(AnnualRecord {
            building_id: id.clone(),
            total: split.total,
            heating: split.heating,
            cooling: split.cooling,
        });
        buildings.push(BuildingRecord {
            id: id.clone(),
            property_type: PropertyType::SingleFamily,
            year_built: 1990,
            floor_area: area,
            location: Some((lat, lon)),
        });
        energy.push(DailySeries { building_id: id.clone(), days });
        homes.push(HomeTruth { building_id: id, pre_fault, params, faults, floor_area: area });
    }

    Ok(SynthOutput {
        buildings,
        energy,
        weather,
        annuals,
        truth: GroundTruth { seed: spec.seed, homes },
    })
}

/// Detection quality for one fault class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub per_class: BTreeMap<InjectedFault, ClassMetrics>,
}

/// Score fault reports against ground truth, per fault class.
///
/// A class counts as predicted for a home when the report raises the flags
/// that class's injection manipulates. Homes in the truth without a report
/// count as all-clear predictions; report ids unknown to the truth are an
/// error. Precision and recall degrade to 1 when undefined.
pub fn score(reports: &[FaultReport], truth: &GroundTruth) -> Result<Score> {
    let truth_ids: BTreeSet<&str> = truth.homes.iter().map(|h| h.building_id.as_str()).collect();
    let mut by_id: BTreeMap<&str, &FaultReport> = BTreeMap::new();
    for r in reports {
        if !truth_ids.contains(r.building_id.as_str()) {
            return Err(Error::IdMismatch(format!(
                "report for {} does not match any generated home",
                r.building_id
            )));
        }
        by_id.insert(r.building_id.as_str(), r);
    }

    let mut per_class = BTreeMap::new();
    for &class in &InjectedFault::ALL {
        let mut tp = 0;
        let mut fp = 0;
        let mut f_n = 0;
        for home in &truth.homes {
            let actual = home.faults.contains(&class);
            let predicted = by_id
                .get(home.building_id.as_str())
                .map_or(false, |r| class.predicted_by(&r.flags));
            match (actual, predicted) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => f_n += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + f_n == 0 { 1.0 } else { tp as f64 / (tp + f_n) as f64 };
        per_class.insert(
            class,
            ClassMetrics {
                true_positives: tp,
                false_positives: fp,
                false_negatives: f_n,
                precision,
                recall,
            },
        );
    }
    Ok(Score { per_class })
}

/// Jaccard agreement between two flaggings, per flag kind: the overlap of
/// the two flagged sets over their union, 1 when both are empty.
pub fn flag_agreement(
    a: &BTreeMap<String, EfficiencyFlags>,
    b: &BTreeMap<String, EfficiencyFlags>,
) -> BTreeMap<FlagKind, f64> {
    let mut out = BTreeMap::new();
    for &kind in &FlagKind::ALL {
        let set_a: BTreeSet<&str> =
            a.iter().filter(|(_, f)| f.get(kind)).map(|(id, _)| id.as_str()).collect();
        let set_b: BTreeSet<&str> =
            b.iter().filter(|(_, f)| f.get(kind)).map(|(id, _)| id.as_str()).collect();
        let union = set_a.union(&set_b).count();
        let inter = set_a.intersection(&set_b).count();
        out.insert(kind, if union == 0 { 1.0 } else { inter as f64 / union as f64 });
    }
    out
}
