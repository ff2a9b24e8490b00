//! `flag`: rank homes against their comparison population and report
//! probable faults.
//!
//! Individual mode partitions the buildings into peer cohorts, counts
//! pairwise posterior dominance within each, and flags homes that beat at
//! least the `tau` fraction of their peers. Region mode compares each
//! candidate's posterior against a region-wide parameter distribution built
//! from annual records of an expanding geographic cohort. Both modes only
//! read cached posteriors, so re-flagging with a different `tau` never
//! refits anything.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use balancepoint_core::bayes::{balance_point_means, CompareParam};
use balancepoint_core::faults::{
    default_fault_map, flag_region, grid_aggregate, root_cause, EfficiencyFlags, Sensitivity,
};
use balancepoint_core::ingest::{self, BuildingRecord};
use balancepoint_core::ordering::{dominance_counts, make_peer_groups, BucketSpec, BuildingEcdfs};
use balancepoint_core::region::{expanding_cohort, region_distribution, RegionQuery, SpatialIndex};
use clap::Args;
use serde::Serialize;

use crate::config::{self, Mode, RunConfig};
use crate::errors::{CliError, Result};
use crate::store::{self, ReportEntry, ReportsFile};

#[derive(Args, Debug)]
pub struct FlagArgs {
    /// TOML run configuration; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comparison population: peer cohorts or the region distribution.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub buildings: Option<PathBuf>,
    /// Daily weather CSV (region mode).
    #[arg(long)]
    pub weather: Option<PathBuf>,
    /// Annual consumption CSV (region mode).
    #[arg(long)]
    pub annual: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of fitted posteriors; defaults to {out}/posteriors.
    #[arg(long)]
    pub posteriors: Option<PathBuf>,
    /// Dominance-win fraction needed to raise a flag.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Restrict region mode to this candidate; repeatable.
    #[arg(long = "building")]
    pub candidates: Vec<String>,
    /// Grid cell size in meters.
    #[arg(long)]
    pub cell_m: Option<f64>,
}

#[derive(Serialize)]
struct FlagSummary {
    mode: &'static str,
    tau: f64,
    buildings: usize,
    evaluated: usize,
    flagged: usize,
    /// Homes in cohorts too small to rank (individual mode).
    discarded: Vec<String>,
}

pub fn run(args: &FlagArgs) -> Result<()> {
    let mut cfg = config::load(args.config.as_deref())?;
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if args.buildings.is_some() {
        cfg.buildings = args.buildings.clone();
    }
    if args.weather.is_some() {
        cfg.weather = args.weather.clone();
    }
    if args.annual.is_some() {
        cfg.annual = args.annual.clone();
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if let Some(t) = args.tau {
        cfg.sensitivity.tau = t;
    }
    if let Some(c) = args.cell_m {
        cfg.cell_m = c;
    }

    let sens = cfg.sensitivity.to_core();
    sens.validate()?;
    let buckets = cfg.buckets.to_core();
    let buildings = ingest::load_buildings(&config::require_input("buildings", cfg.buildings.as_ref())?)?;
    if buildings.is_empty() {
        return Err(CliError::input("buildings file lists no buildings"));
    }
    let out = config::require_out(cfg.out.as_ref())?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    let post_dir = args.posteriors.clone().unwrap_or_else(|| out.join("posteriors"));
    if !post_dir.is_dir() {
        return Err(CliError::input(format!(
            "posterior directory {} does not exist; run fit first",
            post_dir.display()
        )));
    }

    match cfg.mode {
        Mode::Individual => run_individual(args, &cfg, &sens, &buckets, &buildings, &out, &post_dir),
        Mode::Region => run_region(args, &cfg, &sens, &buckets, &buildings, &out, &post_dir),
    }
}

fn run_individual(
    _args: &FlagArgs,
    cfg: &RunConfig,
    sens: &Sensitivity,
    buckets: &BucketSpec,
    buildings: &[BuildingRecord],
    out: &Path,
    post_dir: &Path,
) -> Result<()> {
    let groups = make_peer_groups(buildings, buckets);
    let fault_map = default_fault_map();

    let mut entries: Vec<ReportEntry> = Vec::new();
    let mut all_flags: BTreeMap<String, EfficiencyFlags> = BTreeMap::new();
    let mut counts_csv = String::from("building_id,param,wins,group_size\n");
    let mut discarded: Vec<String> = Vec::new();

    for group in &groups {
        if group.discarded {
            discarded.extend(group.member_ids.iter().cloned());
            continue;
        }
        let mut ecdfs: BTreeMap<String, BuildingEcdfs> = BTreeMap::new();
        let mut bp: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for id in &group.member_ids {
            let samples = store::read_posterior(post_dir, id)?;
            bp.insert(id.clone(), balance_point_means(&samples));
            ecdfs.insert(id.clone(), BuildingEcdfs::from_posterior(&samples)?);
        }
        let counts = dominance_counts(group, &ecdfs, None)?;
        let flags = balancepoint_core::faults::flag_cohort(group, &counts, &bp, sens)?;

        for id in &group.member_ids {
            let f = flags[id];
            let report = root_cause(id, &f, &fault_map);
            let wins: BTreeMap<String, usize> = CompareParam::ALL
                .iter()
                .map(|&p| (p.as_str().to_string(), counts.wins_for(id, p)))
                .collect();
            entries.push(ReportEntry {
                building_id: id.clone(),
                flags: f,
                faults: report.faults,
                wins: Some(wins),
                group_size: Some(group.member_ids.len()),
                cohort_size: None,
                doublings: None,
            });
            all_flags.insert(id.clone(), f);
            for (k, p) in CompareParam::ALL.iter().enumerate() {
                let w = counts.wins.get(id).map_or(0, |row| row[k]);
                counts_csv.push_str(&format!(
                    "{id},{},{w},{}\n",
                    p.as_str(),
                    group.member_ids.len()
                ));
            }
        }
    }
    if entries.is_empty() {
        return Err(CliError::input(format!(
            "every cohort fell below min_cohort = {}; nothing to rank",
            buckets.min_cohort
        )));
    }
    entries.sort_by(|a, b| a.building_id.cmp(&b.building_id));
    discarded.sort();

    store::atomic_write(&out.join("counts.csv"), counts_csv.as_bytes())?;
    write_common(out, "individual", cfg, sens, buildings, entries, all_flags, discarded)
}

fn run_region(
    args: &FlagArgs,
    cfg: &RunConfig,
    sens: &Sensitivity,
    buckets: &BucketSpec,
    buildings: &[BuildingRecord],
    out: &Path,
    post_dir: &Path,
) -> Result<()> {
    let weather = ingest::load_weather(&config::require_input("weather", cfg.weather.as_ref())?)?;
    let annuals = ingest::load_annual(&config::require_input("annual", cfg.annual.as_ref())?)?;
    let index = SpatialIndex::build(buildings)?;
    let fault_map = default_fault_map();

    let candidates: Vec<&BuildingRecord> = if args.candidates.is_empty() {
        buildings.iter().filter(|b| store::has_posterior(post_dir, &b.id)).collect()
    } else {
        args.candidates
            .iter()
            .map(|id| {
                buildings
                    .iter()
                    .find(|b| &b.id == id)
                    .ok_or_else(|| CliError::input(format!("unknown building id `{id}`")))
            })
            .collect::<Result<_>>()?
    };
    if candidates.is_empty() {
        return Err(CliError::input(format!(
            "no building has fitted posteriors in {}",
            post_dir.display()
        )));
    }

    let mut entries: Vec<ReportEntry> = Vec::new();
    let mut all_flags: BTreeMap<String, EfficiencyFlags> = BTreeMap::new();
    for b in candidates {
        let samples = store::read_posterior(post_dir, &b.id)?;
        let ecdfs = BuildingEcdfs::from_posterior(&samples).map_err(|e| CliError::from(e).context(&b.id))?;
        let bp = balance_point_means(&samples);

        let mut query = RegionQuery::for_building(b)?;
        query.min_cohort = buckets.min_cohort;
        let cohort = expanding_cohort(&index, &query, buckets)
            .map_err(|e| CliError::from(e).context(format!("candidate {}", b.id)))?;
        let dist = region_distribution(&cohort.members, &annuals, &weather, buckets.min_cohort)
            .map_err(|e| CliError::from(e).context(format!("candidate {}", b.id)))?;

        let f = flag_region(&ecdfs, bp, &dist, sens);
        let report = root_cause(&b.id, &f, &fault_map);
        entries.push(ReportEntry {
            building_id: b.id.clone(),
            flags: f,
            faults: report.faults,
            wins: None,
            group_size: None,
            cohort_size: Some(cohort.members.len()),
            doublings: Some(cohort.doublings),
        });
        all_flags.insert(b.id.clone(), f);
    }
    entries.sort_by(|a, b| a.building_id.cmp(&b.building_id));

    write_common(out, "region", cfg, sens, buildings, entries, all_flags, Vec::new())
}

#[allow(clippy::too_many_arguments)]
fn write_common(
    out: &Path,
    mode: &'static str,
    cfg: &RunConfig,
    sens: &Sensitivity,
    buildings: &[BuildingRecord],
    entries: Vec<ReportEntry>,
    all_flags: BTreeMap<String, EfficiencyFlags>,
    discarded: Vec<String>,
) -> Result<()> {
    let flagged = all_flags.values().filter(|f| f.any()).count();
    let reports = ReportsFile { mode: mode.to_string(), tau: sens.tau, reports: entries };
    store::atomic_write(&out.join("reports.json"), &store::pretty_json(&reports)?)?;
    store::atomic_write(&out.join("flags.json"), &store::pretty_json(&all_flags)?)?;
    store::atomic_write(&out.join("report.txt"), store::render_entries(&reports.reports).as_bytes())?;

    if buildings.iter().all(|b| b.location.is_some()) {
        let grid = grid_aggregate(buildings, &all_flags, cfg.cell_m)?;
        let mut buf = Vec::new();
        grid.write_csv(&mut buf)?;
        store::atomic_write(&out.join("grid.csv"), &buf)?;
    } else {
        eprintln!("flag: some buildings have no location; skipping grid.csv");
    }

    let summary = FlagSummary {
        mode,
        tau: sens.tau,
        buildings: buildings.len(),
        evaluated: reports.reports.len(),
        flagged,
        discarded,
    };
    store::atomic_write(&out.join("flag_summary.json"), &store::pretty_json(&summary)?)?;

    println!(
        "flagged {flagged} of {} evaluated homes ({} total); outputs in {}",
        reports.reports.len(),
        buildings.len(),
        out.display()
    );
    Ok(())
}
