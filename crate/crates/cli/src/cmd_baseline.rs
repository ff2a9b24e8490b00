//! `baseline`: deterministic least-squares reference fits.
//!
//! Two fits per building: one with both balance points pinned to 65 °F and
//! one searching the balance-point plane. With a ground-truth file the
//! command also scores each fit's annual energy decomposition against the
//! generating parameters, which is where the pinned fit's baseload bias
//! shows up.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use balancepoint_core::ingest;
use balancepoint_core::model::{energy_split, fit_ls_65, fit_ls_range};
use balancepoint_core::synth::GroundTruth;
use balancepoint_core::{Error, ParamPoint};
use clap::Args;

use crate::config;
use crate::errors::{CliError, Result};
use crate::store;

#[derive(Args, Debug)]
pub struct BaselineArgs {
    /// TOML run configuration; explicit flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub buildings: Option<PathBuf>,
    #[arg(long)]
    pub energy: Option<PathBuf>,
    #[arg(long)]
    pub weather: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Minimum aligned days for a building to be fitted.
    #[arg(long)]
    pub min_coverage_days: Option<usize>,
    /// Ground-truth JSON; adds per-component split errors.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

const METHODS: [&str; 2] = ["ls65", "ls_range"];

struct Row {
    building_id: String,
    method: &'static str,
    /// Absolute-unit fit; divided by area only when written.
    params: ParamPoint,
    floor_area: f64,
}

pub fn run(args: &BaselineArgs) -> Result<()> {
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
    if let Some(v) = args.min_coverage_days {
        cfg.min_coverage_days = v;
    }

    let buildings = ingest::load_buildings(&config::require_input("buildings", cfg.buildings.as_ref())?)?;
    let traces = ingest::load_energy(&config::require_input("energy", cfg.energy.as_ref())?)?;
    let weather = ingest::load_weather(&config::require_input("weather", cfg.weather.as_ref())?)?;
    let out = config::require_out(cfg.out.as_ref())?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;

    let by_id: BTreeMap<&str, &ingest::DailySeries> =
        traces.iter().map(|t| (t.building_id.as_str(), t)).collect();

    let mut rows: Vec<Row> = Vec::new();
    let mut skipped: Vec<(String, String)> = Vec::new();
    for b in &buildings {
        let Some(trace) = by_id.get(b.id.as_str()) else {
            skipped.push((b.id.clone(), "no energy trace".to_string()));
            continue;
        };
        let aligned = match ingest::align(trace, &weather) {
            Ok(a) => a,
            Err(Error::NoOverlap) => {
                skipped.push((b.id.clone(), "energy and weather share no dates".to_string()));
                continue;
            }
            Err(e) => return Err(CliError::from(e).context(&b.id)),
        };
        if aligned.len() < cfg.min_coverage_days {
            skipped.push((
                b.id.clone(),
                format!("only {} aligned days, need {}", aligned.len(), cfg.min_coverage_days),
            ));
            continue;
        }
        for (method, fit) in METHODS.into_iter().zip([fit_ls_65, fit_ls_range]) {
            match fit(&aligned) {
                Ok(params) => rows.push(Row {
                    building_id: b.id.clone(),
                    method,
                    params,
                    floor_area: b.floor_area,
                }),
                Err(e) => skipped.push((b.id.clone(), format!("{method}: {e}"))),
            }
        }
    }
    rows.sort_by(|a, b| a.building_id.cmp(&b.building_id).then(a.method.cmp(b.method)));

    let mut csv = String::from("building_id,method,base,gamma_heat,gamma_cool,t_heat,t_cool,sigma\n");
    for r in &rows {
        let a = r.floor_area;
        let p = &r.params;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.building_id,
            r.method,
            p.base / a,
            p.gamma_heat / a,
            p.gamma_cool / a,
            p.t_heat,
            p.t_cool,
            p.sigma.map(|s| s / a).unwrap_or(f64::NAN)
        );
    }
    store::atomic_write(&out.join("baselines.csv"), csv.as_bytes())?;

    if let Some(truth_path) = &args.truth {
        let truth: GroundTruth = serde_json::from_slice(
            &std::fs::read(truth_path)
                .map_err(|e| CliError::input(format!("{}: {e}", truth_path.display())))?,
        )
        .map_err(|e| CliError::input(format!("{}: {e}", truth_path.display())))?;
        write_split_errors(&out, &rows, &truth, &weather)?;
    }

    for (id, reason) in &skipped {
        eprintln!("baseline: skipped {id}: {reason}");
    }
    println!(
        "wrote {} baseline fits for {} buildings to {}",
        rows.len(),
        buildings.len(),
        out.join("baselines.csv").display()
    );
    Ok(())
}

/// Percent error of each fitted component total against the generating
/// parameters, over the observed weather. Components the truth says are
/// zero are left blank rather than divided by.
fn write_split_errors(
    out: &std::path::Path,
    rows: &[Row],
    truth: &GroundTruth,
    weather: &ingest::WeatherSeries,
) -> Result<()> {
    let mut csv = String::from("building_id,method,baseload_err_pct,heating_err_pct,cooling_err_pct\n");
    let mut med: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let Some(home) = truth.home(&r.building_id) else {
            continue;
        };
        let est = energy_split(&r.params, weather);
        let tru = energy_split(&home.params, weather);
        let pct = |e: f64, t: f64| -> Option<f64> { (t != 0.0).then(|| 100.0 * (e - t) / t) };
        let fields = [
            pct(est.baseload, tru.baseload),
            pct(est.heating, tru.heating),
            pct(est.cooling, tru.cooling),
        ];
        if let Some(v) = fields[0] {
            med.entry(r.method).or_default().push(v);
        }
        let text: Vec<String> =
            fields.iter().map(|f| f.map(|v| v.to_string()).unwrap_or_default()).collect();
        let _ = writeln!(csv, "{},{},{}", r.building_id, r.method, text.join(","));
    }
    store::atomic_write(&out.join("baseline_errors.csv"), csv.as_bytes())?;

    for (method, mut errs) in med {
        errs.sort_by(f64::total_cmp);
        let m = errs[errs.len() / 2];
        println!("{method}: median baseload error {m:.1}% over {} buildings", errs.len());
    }
    Ok(())
}
