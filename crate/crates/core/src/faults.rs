//! Inefficiency flagging and fault attribution.
//!
//! A home is flagged on a parameter when it stochastically dominates enough
//! of its peers (cohort mode) or the region-wide distribution (region mode).
//! Balance points are flagged directly from posterior means against fixed
//! thresholds. Flags then map to probable faults: several flags can implicate
//! the building envelope, so fault lists are deduplicated unions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bayes::CompareParam;
use crate::error::{Error, Result};
use crate::ingest::BuildingRecord;
use crate::ordering::{
    default_epsilon, ssd_dominates, BuildingEcdfs, DominanceCounts, PeerGroup,
};
use crate::region::{equirect_offset_m, RegionDistribution};

/// Default grid cell edge for spatial aggregation, meters.
pub const DEFAULT_CELL_M: f64 = 100.0;

/// Flagging sensitivity knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    /// Fraction of a home's peers it must dominate to be flagged on a
    /// parameter, in (0, 1].
    pub tau: f64,
    /// Heating balance points above this are flagged, degrees F.
    pub t_heat_threshold: f64,
    /// Cooling balance points below this are flagged, degrees F.
    pub t_cool_threshold: f64,
}

impl Default for Sensitivity {
    fn default() -> Self {
        Sensitivity { tau: 0.75, t_heat_threshold: 70.0, t_cool_threshold: 55.0 }
    }
}

impl Sensitivity {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidParams(format!("tau {} must be in (0, 1]", self.tau)));
        }
        if !self.t_heat_threshold.is_finite() || !self.t_cool_threshold.is_finite() {
            return Err(Error::InvalidParams("balance-point thresholds must be finite".into()));
        }
        Ok(())
    }
}

/// The five per-home evidence flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EfficiencyFlags {
    pub high_gamma_heat: bool,
    pub high_gamma_cool: bool,
    pub high_base: bool,
    pub high_t_heat: bool,
    pub low_t_cool: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FlagKind {
    HighGammaHeat,
    HighGammaCool,
    HighBase,
    HighTHeat,
    LowTCool,
}

impl FlagKind {
    pub const ALL: [FlagKind; 5] = [
        FlagKind::HighGammaHeat,
        FlagKind::HighGammaCool,
        FlagKind::HighBase,
        FlagKind::HighTHeat,
        FlagKind::LowTCool,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::HighGammaHeat => "high_gamma_heat",
            FlagKind::HighGammaCool => "high_gamma_cool",
            FlagKind::HighBase => "high_base",
            FlagKind::HighTHeat => "high_t_heat",
            FlagKind::LowTCool => "low_t_cool",
        }
    }
}

impl EfficiencyFlags {
    pub fn get(&self, kind: FlagKind) -> bool {
        match kind {
            FlagKind::HighGammaHeat => self.high_gamma_heat,
            FlagKind::HighGammaCool => self.high_gamma_cool,
            FlagKind::HighBase => self.high_base,
            FlagKind::HighTHeat => self.high_t_heat,
            FlagKind::LowTCool => self.low_t_cool,
        }
    }

    pub fn set(&mut self, kind: FlagKind, value: bool) {
        match kind {
            FlagKind::HighGammaHeat => self.high_gamma_heat = value,
            FlagKind::HighGammaCool => self.high_gamma_cool = value,
            FlagKind::HighBase => self.high_base = value,
            FlagKind::HighTHeat => self.high_t_heat = value,
            FlagKind::LowTCool => self.low_t_cool = value,
        }
    }

    /// A home counts as inefficient overall when any flag is raised.
    pub fn any(&self) -> bool {
        FlagKind::ALL.iter().any(|&k| self.get(k))
    }

    pub fn active(&self) -> Vec<FlagKind> {
        FlagKind::ALL.iter().copied().filter(|&k| self.get(k)).collect()
    }

    fn flag_for(param: CompareParam) -> FlagKind {
        match param {
            CompareParam::GammaHeat => FlagKind::HighGammaHeat,
            CompareParam::GammaCool => FlagKind::HighGammaCool,
            CompareParam::Base => FlagKind::HighBase,
        }
    }
}

/// Probable building faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    InefficientHeater,
    InefficientAC,
    PoorBuildingEnvelope,
    HighSetPoint,
    LowSetPoint,
    InefficientAppliances,
}

impl FaultKind {
    pub fn label(self) -> &'static str {
        match self {
            FaultKind::InefficientHeater => "inefficient heater",
            FaultKind::InefficientAC => "inefficient AC",
            FaultKind::PoorBuildingEnvelope => "poor building envelope",
            FaultKind::HighSetPoint => "high set point",
            FaultKind::LowSetPoint => "low set point",
            FaultKind::InefficientAppliances => "inefficient appliances",
        }
    }
}

pub type FaultMap = BTreeMap<FlagKind, Vec<FaultKind>>;

/// The standard flag-to-fault mapping. A raised slope implicates the matching
/// equipment and the envelope; shifted balance points implicate thermostat
/// set points and the envelope; raised baseload implicates appliances.
pub fn default_fault_map() -> FaultMap {
    let mut map = FaultMap::new();
    map.insert(
        FlagKind::HighGammaHeat,
        vec![FaultKind::InefficientHeater, FaultKind::PoorBuildingEnvelope],
    );
    map.insert(
        FlagKind::HighGammaCool,
        vec![FaultKind::InefficientAC, FaultKind::PoorBuildingEnvelope],
    );
    map.insert(FlagKind::HighBase, vec![FaultKind::InefficientAppliances]);
    map.insert(
        FlagKind::HighTHeat,
        vec![FaultKind::HighSetPoint, FaultKind::PoorBuildingEnvelope],
    );
    map.insert(
        FlagKind::LowTCool,
        vec![FaultKind::LowSetPoint, FaultKind::PoorBuildingEnvelope],
    );
    map
}

/// Flags plus the faults they imply, for one home.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultReport {
    pub building_id: String,
    pub flags: EfficiencyFlags,
    pub faults: Vec<FaultKind>,
}

/// Minimum pairwise wins needed to be flagged in a group of `n`:
/// the fraction `tau` of the `n - 1` opponents, rounded up, and at least 1.
pub fn win_threshold(tau: f64, n: usize) -> usize {
    let raw = tau * (n.saturating_sub(1)) as f64;
    // Guard against counting up from values like 3.0000000000000004.
    let t = (raw - 1e-9).ceil().max(0.0) as usize;
    t.max(1)
}

/// Flag every member of a peer group from its dominance counts and
/// balance-point posterior means.
pub fn flag_cohort(
    group: &PeerGroup,
    counts: &DominanceCounts,
    bp_means: &BTreeMap<String, (f64, f64)>,
    s: &Sensitivity,
) -> Result<BTreeMap<String, EfficiencyFlags>> {
    s.validate()?;
    if group.member_ids.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let threshold = win_threshold(s.tau, group.member_ids.len());
    let mut out = BTreeMap::new();
    for id in &group.member_ids {
        let &(t_heat_mean, t_cool_mean) = bp_means
            .get(id)
            .ok_or_else(|| Error::IdMismatch(format!("no balance-point means for {id}")))?;
        let mut flags = EfficiencyFlags::default();
        for &param in &CompareParam::ALL {
            if counts.wins_for(id, param) >= threshold {
                flags.set(EfficiencyFlags::flag_for(param), true);
            }
        }
        flags.high_t_heat = t_heat_mean > s.t_heat_threshold;
        flags.low_t_cool = t_cool_mean < s.t_cool_threshold;
        out.insert(id.clone(), flags);
    }
    Ok(out)
}

/// Flag a single home against a region-wide parameter distribution.
pub fn flag_region(
    candidate: &BuildingEcdfs,
    balance_point_means: (f64, f64),
    region: &RegionDistribution,
    s: &Sensitivity,
) -> EfficiencyFlags {
    let mut flags = EfficiencyFlags::default();
    for &param in &CompareParam::ALL {
        let (f, g) = (candidate.cdf(param), region.cdf(param));
        if ssd_dominates(f, g, default_epsilon(f, g)) {
            flags.set(EfficiencyFlags::flag_for(param), true);
        }
    }
    flags.high_t_heat = balance_point_means.0 > s.t_heat_threshold;
    flags.low_t_cool = balance_point_means.1 < s.t_cool_threshold;
    flags
}

/// Map raised flags to their probable faults, deduplicated and sorted.
pub fn root_cause(building_id: &str, flags: &EfficiencyFlags, fault_map: &FaultMap) -> FaultReport {
    let mut faults: Vec<FaultKind> = flags
        .active()
        .into_iter()
        .filter_map(|k| fault_map.get(&k))
        .flatten()
        .copied()
        .collect();
    faults.sort();
    faults.dedup();
    FaultReport { building_id: building_id.to_string(), flags: *flags, faults }
}

/// Per-cell spatial aggregate of inefficiency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    pub flagged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub cell_m: f64,
    /// Grid origin: the centroid of the building locations, `(lat, lon)`.
    pub origin: (f64, f64),
    pub cells: BTreeMap<(i64, i64), CellStats>,
}

impl GridStats {
    pub fn frac_inefficient(&self, cell: (i64, i64)) -> Option<f64> {
        self.cells.get(&cell).map(|c| c.flagged as f64 / c.n as f64)
    }

    /// CSV rows `cell_x,cell_y,n,frac_inefficient`, cells in key order.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "cell_x,cell_y,n,frac_inefficient")?;
        for (&(x, y), c) in &self.cells {
            writeln!(out, "{x},{y},{},{}", c.n, c.flagged as f64 / c.n as f64)?;
        }
        Ok(())
    }
}

/// Bucket homes into `cell_m`-sized square cells around the dataset centroid
/// and report, per cell, the count and the fraction flagged inefficient
/// (any flag raised). Homes absent from `flags` count as unflagged.
pub fn grid_aggregate(
    buildings: &[BuildingRecord],
    flags: &BTreeMap<String, EfficiencyFlags>,
    cell_m: f64,
) -> Result<GridStats> {
    if cell_m <= 0.0 || !cell_m.is_finite() {
        return Err(Error::InvalidParams(format!("cell size {cell_m} must be positive")));
    }
    let mut lat_sum = 0.0;
    let mut lon_sum = 0.0;
    for b in buildings {
        let (lat, lon) = b.location.ok_or_else(|| Error::MissingLocation { id: b.id.clone() })?;
        lat_sum += lat;
        lon_sum += lon;
    }
    if buildings.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let origin = (lat_sum / buildings.len() as f64, lon_sum / buildings.len() as f64);

    let mut cells: BTreeMap<(i64, i64), CellStats> = BTreeMap::new();
    for b in buildings {
        let (east, north) = equirect_offset_m(origin, b.location.unwrap());
        let key = ((east / cell_m).floor() as i64, (north / cell_m).floor() as i64);
        let cell = cells.entry(key).or_insert(CellStats { n: 0, flagged: 0 });
        cell.n += 1;
        if flags.get(&b.id).map_or(false, EfficiencyFlags::any) {
            cell.flagged += 1;
        }
    }
    Ok(GridStats { cell_m, origin, cells })
}

/// Human-readable report: one section per home with its flags, faults, and,
/// when available, the dominance evidence behind the flags.
pub fn render_text_reports(reports: &[FaultReport], counts: Option<&DominanceCounts>) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "building {}", r.building_id);
        let active = r.flags.active();
        if active.is_empty() {
            let _ = writeln!(out, "  flags: none");
        } else {
            let names: Vec<&str> = active.iter().map(|k| k.as_str()).collect();
            let _ = writeln!(out, "  flags: {}", names.join(", "));
        }
        if r.faults.is_empty() {
            let _ = writeln!(out, "  probable faults: none");
        } else {
            let labels: Vec<&str> = r.faults.iter().map(|f| f.label()).collect();
            let _ = writeln!(out, "  probable faults: {}", labels.join(", "));
        }
        if let Some(c) = counts {
            if c.wins.contains_key(&r.building_id) {
                let parts: Vec<String> = CompareParam::ALL
                    .iter()
                    .map(|&p| {
                        format!(
                            "{} {}/{}",
                            p.as_str(),
                            c.wins_for(&r.building_id, p),
                            c.group_size.saturating_sub(1)
                        )
                    })
                    .collect();
                let _ = writeln!(out, "  dominance wins: {}", parts.join(", "));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::ParamECDF;
    use crate::ingest::PropertyType;
    use crate::ordering::{dominance_counts, BucketSpec};
    use crate::region::build_kde_cdf;
    use proptest::prelude::*;

    fn group_of(ids: &[&str]) -> PeerGroup {
        PeerGroup {
            key: (PropertyType::SingleFamily, 99, 1),
            member_ids: ids.iter().map(|s| s.to_string()).collect(),
            discarded: false,
        }
    }

    fn neutral_bps(ids: &[&str]) -> BTreeMap<String, (f64, f64)> {
        ids.iter().map(|s| (s.to_string(), (62.0, 72.0))).collect()
    }

    fn counts_from(wins: &[(&str, [usize; 3])], n: usize) -> DominanceCounts {
        DominanceCounts {
            group_size: n,
            wins: wins.iter().map(|(id, w)| (id.to_string(), *w)).collect(),
        }
    }

    #[test]
    fn threshold_arithmetic() {
        assert_eq!(win_threshold(0.75, 5), 3);
        assert_eq!(win_threshold(0.75, 500), 375);
        assert_eq!(win_threshold(1.0, 5), 4);
        assert_eq!(win_threshold(0.01, 5), 1);
        assert_eq!(win_threshold(0.75, 1), 1);
    }

    #[test]
    fn three_of_four_wins_is_flagged_at_default_tau() {
        let ids = ["a", "b", "c", "d", "e"];
        let counts = counts_from(
            &[
                ("a", [3, 0, 0]),
                ("b", [2, 0, 0]),
                ("c", [1, 0, 0]),
                ("d", [0, 0, 0]),
                ("e", [0, 0, 0]),
            ],
            5,
        );
        let flags =
            flag_cohort(&group_of(&ids), &counts, &neutral_bps(&ids), &Sensitivity::default())
                .unwrap();
        assert!(flags["a"].high_gamma_heat);
        assert!(!flags["b"].high_gamma_heat);
        assert!(flags.values().all(|f| !f.high_gamma_cool && !f.high_base));
    }

    #[test]
    fn balance_point_means_flag_against_thresholds() {
        let ids = ["a"];
        let counts = counts_from(&[], 1);
        let mut bps = BTreeMap::new();
        bps.insert("a".to_string(), (72.0, 50.0));
        let flags =
            flag_cohort(&group_of(&ids), &counts, &bps, &Sensitivity::default()).unwrap();
        assert!(flags["a"].high_t_heat);
        assert!(flags["a"].low_t_cool);
        assert!(!flags["a"].high_gamma_heat);
    }

    #[test]
    fn identical_cohort_raises_no_flags() {
        let ids = ["a", "b", "c"];
        let counts =
            counts_from(&[("a", [0; 3]), ("b", [0; 3]), ("c", [0; 3])], 3);
        let flags =
            flag_cohort(&group_of(&ids), &counts, &neutral_bps(&ids), &Sensitivity::default())
                .unwrap();
        assert!(flags.values().all(|f| !f.any()));
    }

    #[test]
    fn empty_group_is_an_error() {
        let counts = counts_from(&[], 0);
        let err = flag_cohort(&group_of(&[]), &counts, &BTreeMap::new(), &Sensitivity::default())
            .unwrap_err();
        assert!(matches!(err, Error::EmptyGroup));
    }

    #[test]
    fn tau_one_flags_only_the_maximal_element() {
        let ids = ["a", "b", "c", "d"];
        let counts = counts_from(
            &[("a", [3, 0, 0]), ("b", [2, 0, 0]), ("c", [1, 0, 0]), ("d", [0, 0, 0])],
            4,
        );
        let s = Sensitivity { tau: 1.0, ..Sensitivity::default() };
        let flags = flag_cohort(&group_of(&ids), &counts, &neutral_bps(&ids), &s).unwrap();
        let flagged: Vec<&str> = ids.iter().copied().filter(|id| flags[*id].high_gamma_heat).collect();
        assert_eq!(flagged, ["a"]);
    }

    proptest! {
        #[test]
        fn lowering_tau_never_unflags(
            wins in proptest::collection::vec(0usize..10, 2..11),
            tau_lo in 0.05..0.5f64,
            tau_hi in 0.5..1.0f64,
        ) {
            let n = wins.len();
            let ids: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
            let id_refs: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
            let counts = DominanceCounts {
                group_size: n,
                wins: ids
                    .iter()
                    .zip(&wins)
                    .map(|(id, &w)| (id.clone(), [w.min(n - 1); 3]))
                    .collect(),
            };
            let group = group_of(&id_refs);
            let bps = neutral_bps(&id_refs);
            let lo = flag_cohort(&group, &counts, &bps, &Sensitivity { tau: tau_lo, ..Sensitivity::default() }).unwrap();
            let hi = flag_cohort(&group, &counts, &bps, &Sensitivity { tau: tau_hi, ..Sensitivity::default() }).unwrap();
            for id in &ids {
                // Anything flagged at the stricter (higher) tau stays flagged
                // at the looser one.
                prop_assert!(!hi[id].high_gamma_heat || lo[id].high_gamma_heat);
            }
        }
    }

    #[test]
    fn fault_map_cases() {
        let map = default_fault_map();
        let heater = root_cause(
            "h",
            &EfficiencyFlags { high_gamma_heat: true, ..Default::default() },
            &map,
        );
        assert_eq!(heater.faults, [FaultKind::InefficientHeater, FaultKind::PoorBuildingEnvelope]);

        let appliances =
            root_cause("h", &EfficiencyFlags { high_base: true, ..Default::default() }, &map);
        assert_eq!(appliances.faults, [FaultKind::InefficientAppliances]);

        let clean = root_cause("h", &EfficiencyFlags::default(), &map);
        assert!(clean.faults.is_empty());

        // Envelope shows up once even when three flags implicate it.
        let multi = root_cause(
            "h",
            &EfficiencyFlags {
                high_gamma_heat: true,
                high_gamma_cool: true,
                high_t_heat: true,
                ..Default::default()
            },
            &map,
        );
        let envelope_count =
            multi.faults.iter().filter(|&&f| f == FaultKind::PoorBuildingEnvelope).count();
        assert_eq!(envelope_count, 1);
        // Pure function of flags.
        let again = root_cause("h", &multi.flags, &map);
        assert_eq!(again.faults, multi.faults);
    }

    fn point_mass(v: f64) -> ParamECDF {
        ParamECDF { support: vec![v], cdf: vec![1.0] }
    }

    fn ecdf_at(v: f64) -> BuildingEcdfs {
        BuildingEcdfs { gamma_heat: point_mass(v), gamma_cool: point_mass(v), base: point_mass(v) }
    }

    #[test]
    fn region_candidate_equal_to_pool_is_unflagged() {
        let pool: Vec<f64> = (0..50).map(|i| 1.0 + 0.01 * i as f64).collect();
        let cdf = build_kde_cdf(&pool, None).unwrap();
        let region = RegionDistribution {
            gamma_heat_cdf: cdf.clone(),
            gamma_cool_cdf: cdf.clone(),
            base_cdf: cdf.clone(),
            member_ids: vec![],
            bandwidths: [0.1; 3],
        };
        let candidate = BuildingEcdfs {
            gamma_heat: cdf.clone(),
            gamma_cool: cdf.clone(),
            base: cdf,
        };
        let flags = flag_region(&candidate, (62.0, 72.0), &region, &Sensitivity::default());
        assert!(!flags.any());
    }

    #[test]
    fn region_right_shift_flags_that_parameter() {
        let pool: Vec<f64> = (0..50).map(|i| 1.0 + 0.01 * i as f64).collect();
        let cdf = build_kde_cdf(&pool, None).unwrap();
        let shifted = ParamECDF {
            support: cdf.support.iter().map(|x| x + 2.0).collect(),
            cdf: cdf.cdf.clone(),
        };
        let region = RegionDistribution {
            gamma_heat_cdf: cdf.clone(),
            gamma_cool_cdf: cdf.clone(),
            base_cdf: cdf.clone(),
            member_ids: vec![],
            bandwidths: [0.1; 3],
        };
        let candidate =
            BuildingEcdfs { gamma_heat: shifted, gamma_cool: cdf.clone(), base: cdf };
        let flags = flag_region(&candidate, (62.0, 72.0), &region, &Sensitivity::default());
        assert!(flags.high_gamma_heat);
        assert!(!flags.high_gamma_cool);
        assert!(!flags.high_base);
    }

    #[test]
    fn cohort_and_region_agree_on_separated_shift_family() {
        // 16 identical ordinary homes and 5 clearly shifted ones: both
        // execution modes must flag exactly the shifted five.
        let mut values = vec![2.0; 16];
        for k in 0..5 {
            values.push(4.0 + 0.5 * k as f64);
        }
        let ids: Vec<String> = (0..21).map(|i| format!("b{i:02}")).collect();

        let mut ecdfs = BTreeMap::new();
        for (id, &v) in ids.iter().zip(&values) {
            ecdfs.insert(id.clone(), ecdf_at(v));
        }
        let group = PeerGroup {
            key: (PropertyType::SingleFamily, 99, 1),
            member_ids: ids.clone(),
            discarded: false,
        };
        let counts = dominance_counts(&group, &ecdfs, None).unwrap();
        let bps: BTreeMap<String, (f64, f64)> =
            ids.iter().map(|id| (id.clone(), (62.0, 72.0))).collect();
        let cohort_flags =
            flag_cohort(&group, &counts, &bps, &Sensitivity::default()).unwrap();

        let pool_cdf = build_kde_cdf(&values, None).unwrap();
        let region = RegionDistribution {
            gamma_heat_cdf: pool_cdf.clone(),
            gamma_cool_cdf: pool_cdf.clone(),
            base_cdf: pool_cdf,
            member_ids: ids.clone(),
            bandwidths: [0.0; 3],
        };
        for (id, &v) in ids.iter().zip(&values) {
            let region_flags =
                flag_region(&ecdf_at(v), (62.0, 72.0), &region, &Sensitivity::default());
            assert_eq!(
                region_flags.high_gamma_heat, cohort_flags[id].high_gamma_heat,
                "disagreement on {id}"
            );
            assert_eq!(region_flags.high_gamma_heat, v > 3.0, "wrong side for {id}");
        }
    }

    fn located(id: &str, lat: f64, lon: f64) -> BuildingRecord {
        BuildingRecord {
            id: id.to_string(),
            property_type: PropertyType::SingleFamily,
            year_built: 1990,
            floor_area: 1500.0,
            location: Some((lat, lon)),
        }
    }

    #[test]
    fn grid_two_cluster_fractions() {
        // Four homes at one point, two flagged; two homes 550 m north,
        // unflagged. The centroid sits 183.3 m north of the big cluster, so
        // with 100 m cells the clusters land in cell_y -2 and 3.
        let lat_a = 33.0;
        let lat_b = lat_a + 0.004946406;
        let lon = -112.0;
        let buildings = vec![
            located("a1", lat_a, lon),
            located("a2", lat_a, lon),
            located("a3", lat_a, lon),
            located("a4", lat_a, lon),
            located("b1", lat_b, lon),
            located("b2", lat_b, lon),
        ];
        let mut flags = BTreeMap::new();
        for id in ["a1", "a2", "a3", "a4", "b1", "b2"] {
            let mut f = EfficiencyFlags::default();
            f.high_base = id == "a1" || id == "a2";
            flags.insert(id.to_string(), f);
        }
        let grid = grid_aggregate(&buildings, &flags, DEFAULT_CELL_M).unwrap();
        assert_eq!(grid.cells.len(), 2);
        assert_eq!(grid.cells[&(0, -2)], CellStats { n: 4, flagged: 2 });
        assert_eq!(grid.cells[&(0, 3)], CellStats { n: 2, flagged: 0 });
        assert_eq!(grid.frac_inefficient((0, -2)), Some(0.5));
        assert_eq!(grid.frac_inefficient((0, 3)), Some(0.0));

        let mut csv = Vec::new();
        grid.write_csv(&mut csv).unwrap();
        assert_eq!(
            String::from_utf8(csv).unwrap(),
            "cell_x,cell_y,n,frac_inefficient\n0,-2,4,0.5\n0,3,2,0\n"
        );
    }

    #[test]
    fn grid_requires_locations() {
        let mut b = located("x", 33.0, -112.0);
        b.location = None;
        let err = grid_aggregate(&[b], &BTreeMap::new(), 100.0).unwrap_err();
        assert!(matches!(err, Error::MissingLocation { .. }));
    }

    #[test]
    fn text_report_lists_flags_faults_and_evidence() {
        let map = default_fault_map();
        let report = root_cause(
            "h1",
            &EfficiencyFlags { high_gamma_heat: true, high_t_heat: true, ..Default::default() },
            &map,
        );
        let clean = root_cause("h2", &EfficiencyFlags::default(), &map);
        let counts = counts_from(&[("h1", [4, 1, 0]), ("h2", [0, 0, 0])], 5);
        let text = render_text_reports(&[report, clean], Some(&counts));
        assert!(text.contains("building h1"));
        assert!(text.contains("flags: high_gamma_heat, high_t_heat"));
        assert!(text.contains("inefficient heater"));
        assert!(text.contains("poor building envelope"));
        assert!(text.contains("high set point"));
        assert!(text.contains("dominance wins: gamma_heat 4/4"));
        assert!(text.contains("building h2"));
        assert!(text.contains("probable faults: none"));
    }

    #[test]
    fn bucket_spec_wires_into_cohort_flags() {
        // End-to-end cohort path: shifted chain of five homes, the top one
        // dominating all four peers on every parameter.
        let ids: Vec<String> = (0..5).map(|i| format!("h{i}")).collect();
        let mut ecdfs = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            ecdfs.insert(id.clone(), ecdf_at(1.0 + i as f64));
        }
        let buildings: Vec<BuildingRecord> = ids
            .iter()
            .map(|id| BuildingRecord {
                id: id.clone(),
                property_type: PropertyType::SingleFamily,
                year_built: 1990,
                floor_area: 1500.0,
                location: None,
            })
            .collect();
        let spec = BucketSpec { min_cohort: 5, ..BucketSpec::default() };
        let groups = crate::ordering::make_peer_groups(&buildings, &spec);
        assert_eq!(groups.len(), 1);
        let counts = dominance_counts(&groups[0], &ecdfs, None).unwrap();
        let bps: BTreeMap<String, (f64, f64)> =
            ids.iter().map(|id| (id.clone(), (62.0, 72.0))).collect();
        let flags = flag_cohort(&groups[0], &counts, &bps, &Sensitivity::default()).unwrap();
        assert!(flags["h4"].high_gamma_heat && flags["h4"].high_base);
        assert!(!flags["h0"].any() && !flags["h1"].any() && !flags["h2"].any());
        let reports: Vec<FaultReport> = ids
            .iter()
            .map(|id| root_cause(id, &flags[id], &default_fault_map()))
            .collect();
        assert!(reports[4].faults.contains(&FaultKind::InefficientHeater));
        assert!(reports[4].faults.contains(&FaultKind::InefficientAppliances));
        assert!(reports[0].faults.is_empty());
    }
}
