//! `fit`: draw posterior parameter samples for every building with enough
//! usable daily data.
//!
//! Each building gets its own sampler seed derived from the run seed and its
//! id, so adding or removing buildings never shifts anyone else's draws, and
//! the worker count has no effect on the output. Draws are rescaled to
//! per-square-foot intensity before they are written; the rescaling is exact
//! because the model mean is linear in the baseload and both slopes.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;
use std::sync::Mutex;

use balancepoint_core::bayes::{sample_posterior, PosteriorSamples, PriorSpec};
use balancepoint_core::ingest::{self, AlignedSeries};
use balancepoint_core::Error;
use clap::Args;
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::errors::{CliError, Result};
use crate::store;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// TOML run configuration; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Building metadata CSV.
    #[arg(long)]
    pub buildings: Option<PathBuf>,
    /// Daily energy CSV.
    #[arg(long)]
    pub energy: Option<PathBuf>,
    /// Daily weather CSV.
    #[arg(long)]
    pub weather: Option<PathBuf>,
    /// Output directory; posteriors land in {out}/posteriors.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed; per-building sampler seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Retained draws per chain.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Minimum aligned days for a building to be fitted.
    #[arg(long)]
    pub min_coverage_days: Option<usize>,
    /// Exit nonzero if any fitted building fails to converge.
    #[arg(long)]
    pub strict: bool,
}

fn merged_config(args: &FitArgs) -> Result<RunConfig> {
    let mut cfg = config::load(args.config.as_deref())?;
    if args.buildings.is_some() {
        cfg.buildings = args.buildings.clone();
    }
    if args.energy.is_some() {
        cfg.energy = args.energy.clone();
    }
    if args.weather.is_some() {
        cfg.weather = args.weather.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if let Some(v) = args.chains {
        cfg.sampler.chains = v;
    }
    if let Some(v) = args.burn_in {
        cfg.sampler.burn_in = v;
    }
    if let Some(v) = args.samples {
        cfg.sampler.samples = v;
    }
    if let Some(v) = args.jobs {
        cfg.jobs = v;
    }
    if let Some(v) = args.min_coverage_days {
        cfg.min_coverage_days = v;
    }
    if args.strict {
        cfg.strict = true;
    }
    Ok(cfg)
}

struct WorkItem {
    id: String,
    aligned: AlignedSeries,
    floor_area: f64,
    seed: u64,
}

#[derive(Serialize, Clone)]
struct FittedEntry {
    building_id: String,
    seed: u64,
    converged: bool,
    max_r_hat: f64,
    aligned_days: usize,
}

#[derive(Serialize)]
struct SkipEntry {
    building_id: String,
    reason: String,
}

#[derive(Serialize)]
struct FitSummary {
    seed: u64,
    chains: usize,
    burn_in: usize,
    samples_per_chain: usize,
    min_coverage_days: usize,
    normalization: &'static str,
    fitted: Vec<FittedEntry>,
    skipped: Vec<SkipEntry>,
}

/// Scale a posterior from absolute kWh to per-square-foot intensity.
fn to_intensity(samples: &mut PosteriorSamples, area: f64) {
    for p in &mut samples.draws {
        p.base /= area;
        p.gamma_heat /= area;
        p.gamma_cool /= area;
        p.sigma = p.sigma.map(|s| s / area);
    }
}

pub fn run(args: &FitArgs) -> Result<()> {
    let cfg = merged_config(args)?;
    let buildings_path = config::require_input("buildings", cfg.buildings.as_ref())?;
    let energy_path = config::require_input("energy", cfg.energy.as_ref())?;
    let weather_path = config::require_input("weather", cfg.weather.as_ref())?;
    let out = config::require_out(cfg.out.as_ref())?;
    let run_seed = config::require_seed(cfg.seed)?;
    let sampler = cfg.sampler;
    sampler.config(0).validate()?;
    let jobs = cfg.jobs.max(1);

    let buildings = ingest::load_buildings(&buildings_path)?;
    let traces = ingest::load_energy(&energy_path)?;
    let weather = ingest::load_weather(&weather_path)?;

    let post_dir = out.join("posteriors");
    std::fs::create_dir_all(&post_dir)
        .map_err(|e| CliError::input(format!("{}: {e}", post_dir.display())))?;

    let by_id: BTreeMap<&str, &ingest::DailySeries> =
        traces.iter().map(|t| (t.building_id.as_str(), t)).collect();

    // Sanitized filenames must stay one-to-one with ids.
    let mut names: BTreeMap<String, &str> = BTreeMap::new();
    for b in &buildings {
        if let Some(other) = names.insert(store::safe_name(&b.id), &b.id) {
            return Err(CliError::input(format!(
                "building ids `{other}` and `{}` collide after filename sanitization",
                b.id
            )));
        }
    }

    let mut items: Vec<WorkItem> = Vec::new();
    let mut skipped: Vec<SkipEntry> = Vec::new();
    let known: BTreeSet<&str> = buildings.iter().map(|b| b.id.as_str()).collect();
    for t in &traces {
        if !known.contains(t.building_id.as_str()) {
            skipped.push(SkipEntry {
                building_id: t.building_id.clone(),
                reason: "energy trace has no building record".to_string(),
            });
        }
    }
    for b in &buildings {
        let Some(trace) = by_id.get(b.id.as_str()) else {
            skipped.push(SkipEntry {
                building_id: b.id.clone(),
                reason: "no energy trace".to_string(),
            });
            continue;
        };
        let aligned = match ingest::align(trace, &weather) {
            Ok(a) => a,
            Err(Error::NoOverlap) => {
                skipped.push(SkipEntry {
                    building_id: b.id.clone(),
                    reason: "energy and weather share no dates".to_string(),
                });
                continue;
            }
            Err(e) => return Err(CliError::from(e).context(&b.id)),
        };
        if aligned.len() < cfg.min_coverage_days {
            skipped.push(SkipEntry {
                building_id: b.id.clone(),
                reason: format!(
                    "only {} aligned days, need {}",
                    aligned.len(),
                    cfg.min_coverage_days
                ),
            });
            continue;
        }
        items.push(WorkItem {
            id: b.id.clone(),
            aligned,
            floor_area: b.floor_area,
            seed: store::building_seed(run_seed, &b.id),
        });
    }

    if items.is_empty() {
        return Err(CliError::input(format!(
            "no building passed the {}-day coverage floor",
            cfg.min_coverage_days
        )));
    }

    let queue: Mutex<VecDeque<usize>> = Mutex::new((0..items.len()).collect());
    let fitted: Mutex<Vec<FittedEntry>> = Mutex::new(Vec::with_capacity(items.len()));
    let failure: Mutex<Option<CliError>> = Mutex::new(None);
    let priors = PriorSpec::default();

    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let Some(i) = queue.lock().unwrap().pop_front() else {
                    return;
                };
                let item = &items[i];
                let result = sample_posterior(&item.aligned, &priors, &sampler.config(item.seed))
                    .map_err(CliError::from)
                    .and_then(|mut samples| {
                        to_intensity(&mut samples, item.floor_area);
                        store::write_posterior(&post_dir, &item.id, &samples)?;
                        Ok(samples)
                    });
                match result {
                    Ok(samples) => fitted.lock().unwrap().push(FittedEntry {
                        building_id: item.id.clone(),
                        seed: item.seed,
                        converged: samples.diagnostics.converged,
                        max_r_hat: samples.diagnostics.max_r_hat(),
                        aligned_days: item.aligned.len(),
                    }),
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e.context(&item.id));
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut fitted = fitted.into_inner().unwrap();
    fitted.sort_by(|a, b| a.building_id.cmp(&b.building_id));
    skipped.sort_by(|a, b| a.building_id.cmp(&b.building_id));

    let unconverged: Vec<&str> = fitted
        .iter()
        .filter(|f| !f.converged)
        .map(|f| f.building_id.as_str())
        .collect();

    let summary = FitSummary {
        seed: run_seed,
        chains: sampler.chains,
        burn_in: sampler.burn_in,
        samples_per_chain: sampler.samples,
        min_coverage_days: cfg.min_coverage_days,
        normalization: "per_square_foot",
        fitted: fitted.clone(),
        skipped,
    };
    store::atomic_write(&out.join("fit_summary.json"), &store::pretty_json(&summary)?)?;

    println!(
        "fitted {} buildings ({} converged), skipped {}; posteriors in {}",
        summary.fitted.len(),
        summary.fitted.len() - unconverged.len(),
        summary.skipped.len(),
        post_dir.display()
    );

    if cfg.strict && !unconverged.is_empty() {
        return Err(CliError::convergence(format!(
            "{} of {} fitted buildings failed convergence: {}",
            unconverged.len(),
            summary.fitted.len(),
            unconverged.join(", ")
        )));
    }
    Ok(())
}
