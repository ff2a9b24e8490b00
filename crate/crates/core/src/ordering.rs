//! Second-order stochastic dominance between parameter distributions,
//! peer-group construction, and all-pairs dominance counting.
//!
//! A home "dominates" another on a parameter when its distribution sits
//! stochastically higher: the running integral of the difference between the
//! two distribution functions never dips meaningfully negative and ends
//! strictly positive. Since every distribution here is a step function, the
//! integral is accumulated exactly, segment by segment, over the merged
//! supports; refining the grid cannot change a verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bayes::{CompareParam, ParamECDF, PosteriorSamples};
use crate::error::{Error, Result};
use crate::ingest::{BuildingRecord, PropertyType};

/// Relative slack absorbed by the default dominance epsilon.
pub const EPSILON_SCALE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DominanceVerdict {
    FirstDominates,
    SecondDominates,
    Neither,
}

/// Running-integral summary of (G - F) over the merged support of two step
/// CDFs F and G. `total` is the full signed area and `min`/`max` track the
/// running extremes.
struct AreaWalk {
    min: f64,
    max: f64,
    total: f64,
}

fn area_walk(f: &ParamECDF, g: &ParamECDF) -> AreaWalk {
    let (fs, gs) = (&f.support, &g.support);
    let mut i = 0;
    let mut j = 0;
    let mut vf = 0.0;
    let mut vg = 0.0;
    let mut running = 0.0f64;
    let mut min = 0.0f64;
    let mut max = 0.0f64;
    let mut x = fs[0].min(gs[0]);
    loop {
        while i < fs.len() && fs[i] <= x {
            vf = f.cdf[i];
            i += 1;
        }
        while j < gs.len() && gs[j] <= x {
            vg = g.cdf[j];
            j += 1;
        }
        let next = match (fs.get(i), gs.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => break,
        };
        running += (vg - vf) * (next - x);
        min = min.min(running);
        max = max.max(running);
        x = next;
    }
    AreaWalk { min, max, total: running }
}

/// Default strictness epsilon for a pair of distributions: a tiny fraction
/// of the merged support range, enough to absorb floating-point noise.
pub fn default_epsilon(f: &ParamECDF, g: &ParamECDF) -> f64 {
    let lo = f.support[0].min(g.support[0]);
    let hi = f.support.last().unwrap().max(*g.support.last().unwrap());
    EPSILON_SCALE * (hi - lo)
}

/// Does `f` dominate `g` in the second-order stochastic sense?
///
/// True iff the running integral of (G - F) stays above `-epsilon` at every
/// point of the merged support and the final integral exceeds `epsilon`.
/// The final integral equals the difference in means, so a dominating
/// distribution is in particular the one with the strictly larger mean.
pub fn ssd_dominates(f: &ParamECDF, g: &ParamECDF, epsilon: f64) -> bool {
    let w = area_walk(f, g);
    w.min >= -epsilon && w.total > epsilon
}

/// Compare both directions at once. Returns `Neither` when no direction
/// passes, and also in the epsilon-degenerate case where both would.
pub fn verdict(f: &ParamECDF, g: &ParamECDF, epsilon: f64) -> DominanceVerdict {
    let w = area_walk(f, g);
    let first = w.min >= -epsilon && w.total > epsilon;
    // The reverse-direction running integral is the negation, so its minimum
    // is -max and its total is -total.
    let second = w.max <= epsilon && -w.total > epsilon;
    match (first, second) {
        (true, false) => DominanceVerdict::FirstDominates,
        (false, true) => DominanceVerdict::SecondDominates,
        _ => DominanceVerdict::Neither,
    }
}

/// `verdict` with the default epsilon for the pair.
pub fn verdict_default(f: &ParamECDF, g: &ParamECDF) -> DominanceVerdict {
    verdict(f, g, default_epsilon(f, g))
}

/// Attribute bucketing used to build peer cohorts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketSpec {
    /// Width of year-built buckets, years.
    pub year_width: i32,
    /// Width of floor-area buckets, square feet.
    pub area_width: f64,
    /// Groups smaller than this are marked discarded.
    pub min_cohort: usize,
}

impl Default for BucketSpec {
    fn default() -> Self {
        BucketSpec { year_width: 20, area_width: 1000.0, min_cohort: 20 }
    }
}

pub type GroupKey = (PropertyType, i32, i64);

impl BucketSpec {
    pub fn key(&self, property_type: PropertyType, year_built: i32, floor_area: f64) -> GroupKey {
        (
            property_type,
            year_built.div_euclid(self.year_width),
            (floor_area / self.area_width).floor() as i64,
        )
    }
}

/// A cohort of buildings sharing property type, year bucket, and area bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerGroup {
    pub key: GroupKey,
    pub member_ids: Vec<String>,
    /// True when the group is too small to support within-cohort ranking.
    pub discarded: bool,
}

/// Partition buildings into peer groups. Members are sorted by id within
/// each group and the groups come out in key order.
pub fn make_peer_groups(buildings: &[BuildingRecord], buckets: &BucketSpec) -> Vec<PeerGroup> {
    let mut by_key: BTreeMap<GroupKey, Vec<String>> = BTreeMap::new();
    for b in buildings {
        by_key
            .entry(buckets.key(b.property_type, b.year_built, b.floor_area))
            .or_default()
            .push(b.id.clone());
    }
    by_key
        .into_iter()
        .map(|(key, mut member_ids)| {
            member_ids.sort();
            let discarded = member_ids.len() < buckets.min_cohort;
            PeerGroup { key, member_ids, discarded }
        })
        .collect()
}

/// Posterior distributions of the three compared parameters for one home.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingEcdfs {
    pub gamma_heat: ParamECDF,
    pub gamma_cool: ParamECDF,
    pub base: ParamECDF,
}

impl BuildingEcdfs {
    pub fn from_posterior(samples: &PosteriorSamples) -> Result<BuildingEcdfs> {
        Ok(BuildingEcdfs {
            gamma_heat: crate::bayes::ecdf(samples, CompareParam::GammaHeat)?,
            gamma_cool: crate::bayes::ecdf(samples, CompareParam::GammaCool)?,
            base: crate::bayes::ecdf(samples, CompareParam::Base)?,
        })
    }

    pub fn cdf(&self, param: CompareParam) -> &ParamECDF {
        match param {
            CompareParam::GammaHeat => &self.gamma_heat,
            CompareParam::GammaCool => &self.gamma_cool,
            CompareParam::Base => &self.base,
        }
    }
}

/// Pairwise win counts within one peer group, per compared parameter
/// (indexed in [`CompareParam::ALL`] order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCounts {
    pub group_size: usize,
    pub wins: BTreeMap<String, [usize; 3]>,
}

impl DominanceCounts {
    pub fn wins_for(&self, id: &str, param: CompareParam) -> usize {
        let k = CompareParam::ALL.iter().position(|&p| p == param).unwrap();
        self.wins.get(id).map_or(0, |w| w[k])
    }

    /// CSV rows `building_id,param,wins,group_size`, ids sorted, parameters
    /// in [`CompareParam::ALL`] order.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "building_id,param,wins,group_size")?;
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        for (id, wins) in &self.wins {
            for (k, param) in CompareParam::ALL.iter().enumerate() {
                w.write_record([id.as_str(), param.as_str(), &wins[k].to_string(), &self.group_size.to_string()])?;
            }
        }
        out.write_all(&w.into_inner().map_err(|e| Error::DegenerateData(e.to_string()))?)?;
        Ok(())
    }
}

/// All-pairs dominance counting within one group.
///
/// For every ordered pair and parameter, the winner's count goes up by one.
/// Each unordered pair is walked once; both directions fall out of the same
/// running integral. A group of one has no pairs and yields empty counts.
/// `epsilon` of `None` applies the per-pair default.
pub fn dominance_counts(
    group: &PeerGroup,
    ecdfs: &BTreeMap<String, BuildingEcdfs>,
    epsilon: Option<f64>,
) -> Result<DominanceCounts> {
    for id in &group.member_ids {
        if !ecdfs.contains_key(id) {
            return Err(Error::MissingEcdf { id: id.clone() });
        }
    }
    let n = group.member_ids.len();
    let mut counts = DominanceCounts { group_size: n, wins: BTreeMap::new() };
    if n < 2 {
        return Ok(counts);
    }
    for id in &group.member_ids {
        counts.wins.insert(id.clone(), [0; 3]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&group.member_ids[i], &group.member_ids[j]);
            let (ea, eb) = (&ecdfs[a], &ecdfs[b]);
            for (k, &param) in CompareParam::ALL.iter().enumerate() {
                let (f, g) = (ea.cdf(param), eb.cdf(param));
                let eps = epsilon.unwrap_or_else(|| default_epsilon(f, g));
                match verdict(f, g, eps) {
                    DominanceVerdict::FirstDominates => counts.wins.get_mut(a).unwrap()[k] += 1,
                    DominanceVerdict::SecondDominates => counts.wins.get_mut(b).unwrap()[k] += 1,
                    DominanceVerdict::Neither => {}
                }
            }
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(support: &[f64], cdf: &[f64]) -> ParamECDF {
        let e = ParamECDF { support: support.to_vec(), cdf: cdf.to_vec() };
        e.validate().unwrap();
        e
    }

    fn shifted(e: &ParamECDF, delta: f64) -> ParamECDF {
        ParamECDF { support: e.support.iter().map(|x| x + delta).collect(), cdf: e.cdf.clone() }
    }

    /// Dense brute-force oracle: sample both CDFs on a fine uniform grid and
    /// accumulate the trapezoid integral of (G - F), tracking the minimum.
    fn brute_force(f: &ParamECDF, g: &ParamECDF, steps: usize) -> (f64, f64) {
        let lo = f.support[0].min(g.support[0]) - 1.0;
        let hi = f.support.last().unwrap().max(*g.support.last().unwrap()) + 1.0;
        let dx = (hi - lo) / steps as f64;
        let mut running = 0.0f64;
        let mut min = 0.0f64;
        let mut prev = g.eval(lo) - f.eval(lo);
        for k in 1..=steps {
            let x = lo + dx * k as f64;
            let cur = g.eval(x) - f.eval(x);
            running += 0.5 * (prev + cur) * dx;
            min = min.min(running);
            prev = cur;
        }
        (min, running)
    }

    #[test]
    fn identical_distributions_do_not_dominate() {
        let f = step(&[1.0, 2.0, 3.0], &[0.2, 0.7, 1.0]);
        assert!(!ssd_dominates(&f, &f, 1e-12));
        assert_eq!(verdict_default(&f, &f), DominanceVerdict::Neither);
    }

    #[test]
    fn right_shift_dominates() {
        let g = step(&[1.0, 2.0, 3.0], &[0.2, 0.7, 1.0]);
        let f = shifted(&g, 1.0);
        assert!(ssd_dominates(&f, &g, default_epsilon(&f, &g)));
        assert_eq!(verdict_default(&f, &g), DominanceVerdict::FirstDominates);
        assert_eq!(verdict_default(&g, &f), DominanceVerdict::SecondDominates);
    }

    #[test]
    fn early_deficit_blocks_dominance_despite_larger_mean() {
        // F puts 30% of its mass at 0, well below all of G, then the rest at
        // 10. Mean of F is 7 vs 1.5 for G, but the running integral dips to
        // -0.3 before recovering, so F does not second-order dominate G.
        let f = step(&[0.0, 10.0], &[0.3, 1.0]);
        let g = step(&[1.0, 2.0], &[0.5, 1.0]);
        let w_total = brute_force(&f, &g, 200_000);
        assert!(w_total.1 > 1.0, "mean gap should be clearly positive");
        assert!(w_total.0 < -0.25, "oracle sees the early deficit");
        assert!(!ssd_dominates(&f, &g, default_epsilon(&f, &g)));
        assert!(!ssd_dominates(&g, &f, default_epsilon(&f, &g)));
        assert_eq!(verdict_default(&f, &g), DominanceVerdict::Neither);
    }

    #[test]
    fn exact_walk_matches_dense_oracle() {
        let cases = [
            (step(&[0.0, 10.0], &[0.3, 1.0]), step(&[1.0, 2.0], &[0.5, 1.0])),
            (step(&[0.0, 1.0, 4.0], &[0.1, 0.6, 1.0]), step(&[0.5, 2.0], &[0.4, 1.0])),
            (step(&[-3.0, 0.0], &[0.5, 1.0]), step(&[-2.5, 0.5, 1.5], &[0.2, 0.9, 1.0])),
        ];
        for (f, g) in &cases {
            let w = area_walk(f, g);
            let (bf_min, bf_total) = brute_force(f, g, 400_000);
            assert!((w.total - bf_total).abs() < 1e-3, "total {} vs {}", w.total, bf_total);
            assert!((w.min - bf_min).abs() < 1e-3, "min {} vs {}", w.min, bf_min);
        }
    }

    #[test]
    fn shift_chain_counts_two_one_zero() {
        let base = step(&[1.0, 2.0, 3.0], &[0.3, 0.8, 1.0]);
        let mk = |delta: f64| BuildingEcdfs {
            gamma_heat: shifted(&base, delta),
            gamma_cool: shifted(&base, 2.0 * delta),
            base: shifted(&base, 3.0 * delta),
        };
        let mut ecdfs = BTreeMap::new();
        ecdfs.insert("a".to_string(), mk(2.0));
        ecdfs.insert("b".to_string(), mk(1.0));
        ecdfs.insert("c".to_string(), mk(0.0));
        let group = PeerGroup {
            key: (PropertyType::SingleFamily, 99, 1),
            member_ids: vec!["a".into(), "b".into(), "c".into()],
            discarded: false,
        };
        let counts = dominance_counts(&group, &ecdfs, None).unwrap();
        for &p in &CompareParam::ALL {
            assert_eq!(counts.wins_for("a", p), 2);
            assert_eq!(counts.wins_for("b", p), 1);
            assert_eq!(counts.wins_for("c", p), 0);
        }
        let total: usize = counts.wins.values().flat_map(|w| w.iter()).sum();
        assert!(total <= 3 * 3 * 2);
    }

    #[test]
    fn identical_members_count_no_wins() {
        let e = step(&[1.0, 2.0], &[0.5, 1.0]);
        let same = BuildingEcdfs { gamma_heat: e.clone(), gamma_cool: e.clone(), base: e };
        let mut ecdfs = BTreeMap::new();
        for id in ["a", "b", "c", "d"] {
            ecdfs.insert(id.to_string(), same.clone());
        }
        let group = PeerGroup {
            key: (PropertyType::SingleFamily, 99, 1),
            member_ids: ecdfs.keys().cloned().collect(),
            discarded: false,
        };
        let counts = dominance_counts(&group, &ecdfs, None).unwrap();
        assert!(counts.wins.values().all(|w| *w == [0; 3]));
    }

    #[test]
    fn single_member_group_has_no_counts() {
        let e = step(&[1.0], &[1.0]);
        let mut ecdfs = BTreeMap::new();
        ecdfs.insert(
            "solo".to_string(),
            BuildingEcdfs { gamma_heat: e.clone(), gamma_cool: e.clone(), base: e },
        );
        let group = PeerGroup {
            key: (PropertyType::SingleFamily, 99, 1),
            member_ids: vec!["solo".into()],
            discarded: true,
        };
        let counts = dominance_counts(&group, &ecdfs, None).unwrap();
        assert!(counts.wins.is_empty());
        assert_eq!(counts.group_size, 1);
    }

    #[test]
    fn missing_ecdf_is_an_error() {
        let group = PeerGroup {
            key: (PropertyType::SingleFamily, 99, 1),
            member_ids: vec!["ghost".into()],
            discarded: false,
        };
        let err = dominance_counts(&group, &BTreeMap::new(), None).unwrap_err();
        assert!(matches!(err, Error::MissingEcdf { id } if id == "ghost"));
    }

    fn building(id: &str, pt: PropertyType, year: i32, area: f64) -> BuildingRecord {
        BuildingRecord {
            id: id.to_string(),
            property_type: pt,
            year_built: year,
            floor_area: area,
            location: None,
        }
    }

    #[test]
    fn peer_groups_partition_by_buckets() {
        let buildings = vec![
            building("a", PropertyType::SingleFamily, 1985, 1500.0),
            building("b", PropertyType::SingleFamily, 1987, 1900.0),
            building("c", PropertyType::SingleFamily, 1987, 2100.0),
            building("d", PropertyType::MultiFamily, 1985, 1500.0),
        ];
        let spec = BucketSpec { min_cohort: 2, ..BucketSpec::default() };
        let groups = make_peer_groups(&buildings, &spec);
        assert_eq!(groups.len(), 3);
        let ab = groups.iter().find(|g| g.member_ids == ["a", "b"]).unwrap();
        assert!(!ab.discarded);
        let c = groups.iter().find(|g| g.member_ids == ["c"]).unwrap();
        assert!(c.discarded);
        let d = groups.iter().find(|g| g.member_ids == ["d"]).unwrap();
        assert!(d.discarded);
        assert_eq!(d.key.0, PropertyType::MultiFamily);
    }

    #[test]
    fn small_groups_are_marked_discarded() {
        let buildings: Vec<BuildingRecord> = (0..19)
            .map(|i| building(&format!("b{i}"), PropertyType::Apartment, 1990, 800.0))
            .collect();
        let groups = make_peer_groups(&buildings, &BucketSpec::default());
        assert_eq!(groups.len(), 1);
        assert!(groups[0].discarded);
        assert_eq!(groups[0].member_ids.len(), 19);
    }

    #[test]
    fn counts_csv_layout() {
        let mut wins = BTreeMap::new();
        wins.insert("h1".to_string(), [2, 0, 1]);
        let counts = DominanceCounts { group_size: 3, wins };
        let mut out = Vec::new();
        counts.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "building_id,param,wins,group_size\nh1,gamma_heat,2,3\nh1,gamma_cool,0,3\nh1,base,1,3\n"
        );
    }

    fn arb_ecdf() -> impl Strategy<Value = ParamECDF> {
        (2usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(-50.0..50.0f64, n),
                proptest::collection::vec(0.01..1.0f64, n),
            )
                .prop_map(|(mut xs, ws)| {
                    xs.sort_by(f64::total_cmp);
                    xs.dedup();
                    let ws = &ws[..xs.len()];
                    let total: f64 = ws.iter().sum();
                    let mut acc = 0.0;
                    let cdf: Vec<f64> = ws
                        .iter()
                        .map(|w| {
                            acc += w / total;
                            acc.min(1.0)
                        })
                        .collect();
                    let mut e = ParamECDF { support: xs, cdf };
                    *e.cdf.last_mut().unwrap() = 1.0;
                    e
                })
        })
    }

    proptest! {
        #[test]
        fn verdicts_are_antisymmetric(f in arb_ecdf(), g in arb_ecdf()) {
            let eps = default_epsilon(&f, &g);
            let fw = verdict(&f, &g, eps);
            let bw = verdict(&g, &f, eps);
            let mirrored = match fw {
                DominanceVerdict::FirstDominates => DominanceVerdict::SecondDominates,
                DominanceVerdict::SecondDominates => DominanceVerdict::FirstDominates,
                DominanceVerdict::Neither => DominanceVerdict::Neither,
            };
            prop_assert_eq!(bw, mirrored);
            prop_assert!(!(ssd_dominates(&f, &g, 0.0) && ssd_dominates(&g, &f, 0.0)));
        }

        #[test]
        fn any_right_shift_dominates(f in arb_ecdf(), delta in 0.01..5.0f64) {
            let s = shifted(&f, delta);
            prop_assert!(ssd_dominates(&s, &f, default_epsilon(&s, &f)));
            prop_assert_eq!(verdict_default(&s, &f), DominanceVerdict::FirstDominates);
        }

        #[test]
        fn shift_chains_are_transitive(f in arb_ecdf(), d1 in 0.05..2.0f64, d2 in 0.05..2.0f64) {
            let mid = shifted(&f, d1);
            let top = shifted(&f, d1 + d2);
            prop_assert!(ssd_dominates(&top, &mid, 0.0));
            prop_assert!(ssd_dominates(&mid, &f, 0.0));
            prop_assert!(ssd_dominates(&top, &f, 0.0));
        }

        #[test]
        fn verdicts_survive_support_refinement(f in arb_ecdf(), g in arb_ecdf()) {
            // Inserting midpoints with the step function's own value there
            // leaves the distribution unchanged, so verdicts must not move.
            let refine = |e: &ParamECDF| {
                let mut support = Vec::new();
                let mut cdf = Vec::new();
                for k in 0..e.support.len() {
                    support.push(e.support[k]);
                    cdf.push(e.cdf[k]);
                    if k + 1 < e.support.len() {
                        let mid = 0.5 * (e.support[k] + e.support[k + 1]);
                        if mid > e.support[k] && mid < e.support[k + 1] {
                            support.push(mid);
                            cdf.push(e.cdf[k]);
                        }
                    }
                }
                ParamECDF { support, cdf }
            };
            let eps = default_epsilon(&f, &g);
            let coarse = verdict(&f, &g, eps);
            let fine = verdict(&refine(&f), &refine(&g), eps);
            prop_assert_eq!(coarse, fine);
        }

        #[test]
        fn peer_groups_cover_every_building_once(
            years in proptest::collection::vec(1900..2020i32, 1..40),
            areas in proptest::collection::vec(200.0..5000.0f64, 1..40),
        ) {
            let n = years.len().min(areas.len());
            let buildings: Vec<BuildingRecord> = (0..n)
                .map(|i| building(&format!("b{i:02}"), PropertyType::SingleFamily, years[i], areas[i]))
                .collect();
            let spec = BucketSpec::default();
            let groups = make_peer_groups(&buildings[..n], &spec);
            let mut seen: Vec<&String> = groups.iter().flat_map(|g| g.member_ids.iter()).collect();
            seen.sort();
            prop_assert_eq!(seen.len(), n);
            seen.dedup();
            prop_assert_eq!(seen.len(), n);
            for g in &groups {
                for id in &g.member_ids {
                    let b = buildings.iter().find(|b| &b.id == id).unwrap();
                    prop_assert_eq!(spec.key(b.property_type, b.year_built, b.floor_area), g.key);
                }
            }
        }
    }
}
