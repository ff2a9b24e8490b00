//! Region-mode estimation: coarse parameters from annual totals, KDE
//! reference distributions, and spatial cohort retrieval.
//!
//! When daily traces are unavailable for the surrounding housing stock, a
//! building is instead compared against a region-wide distribution of
//! parameters solved from annual heating/cooling/total records under fixed
//! 65 °F balance points. The cohort for that distribution comes from an
//! R-tree over building locations, expanding the search box until enough
//! attribute-matched homes are found.

use std::collections::BTreeMap;

use rstar::primitives::GeomWithData;
use rstar::{RTree, AABB};
use serde::{Deserialize, Serialize};

use crate::bayes::{CompareParam, ParamECDF};
use crate::error::{Error, Result};
use crate::ingest::{AnnualRecord, BuildingRecord, PropertyType, WeatherSeries};
use crate::model::ParamPoint;
use crate::ordering::BucketSpec;

/// Smallest cohort a region distribution may be built from.
pub const DEFAULT_MIN_COHORT: usize = 20;

/// Side length of the initial search box, degrees of latitude/longitude
/// (about 5 km).
pub const INITIAL_BOX_DEG: f64 = 0.05;

const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Flat-earth offset in meters from `origin` to `p`, adequate at city scale.
/// Returns `(east, north)`.
pub(crate) fn equirect_offset_m(origin: (f64, f64), p: (f64, f64)) -> (f64, f64) {
    let lat0 = origin.0.to_radians();
    let east = EARTH_RADIUS_M * lat0.cos() * (p.1 - origin.1).to_radians();
    let north = EARTH_RADIUS_M * (p.0 - origin.0).to_radians();
    (east, north)
}

/// Solve for a parameter point from one year of aggregate records, assuming
/// both balance points sit at 65 °F.
///
/// Slopes are each annual component divided by the matching degree-day sum,
/// baseload is the non-weather remainder spread over the days; everything is
/// then divided by floor area. The returned point carries no sigma, since no
/// daily residual exists at this granularity.
pub fn solve_annual(rec: &AnnualRecord, weather: &WeatherSeries, area: f64) -> Result<ParamPoint> {
    if area <= 0.0 {
        return Err(Error::ZeroArea { id: rec.building_id.clone() });
    }
    if weather.days.is_empty() {
        return Err(Error::DegenerateData("annual solve needs a non-empty weather year".to_string()));
    }
    let mut dd_heat = 0.0;
    let mut dd_cool = 0.0;
    for &(_, t) in &weather.days {
        dd_heat += (65.0 - t).max(0.0);
        dd_cool += (t - 65.0).max(0.0);
    }
    if rec.heating > 0.0 && dd_heat == 0.0 {
        return Err(Error::ZeroDegreeDays { component: "heating".to_string() });
    }
    if rec.cooling > 0.0 && dd_cool == 0.0 {
        return Err(Error::ZeroDegreeDays { component: "cooling".to_string() });
    }
    let gamma_heat = if dd_heat > 0.0 { rec.heating / dd_heat } else { 0.0 };
    let gamma_cool = if dd_cool > 0.0 { rec.cooling / dd_cool } else { 0.0 };
    let base = (rec.total - rec.heating - rec.cooling) / weather.days.len() as f64;
    Ok(ParamPoint {
        base: (base / area).max(0.0),
        gamma_heat: gamma_heat / area,
        gamma_cool: gamma_cool / area,
        t_heat: 65.0,
        t_cool: 65.0,
        sigma: None,
    })
}

/// Abramowitz-Stegun rational approximation of the error function,
/// accurate to about 1.5e-7. That is far below every tolerance applied to
/// the KDE distributions built from it.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Gaussian-kernel KDE distribution function on a 512-point grid spanning
/// `[min - 3h, max + 3h]`.
///
/// The default bandwidth is Silverman's rule with the robust spread
/// `min(sd, IQR/1.34)`. At least two values are required; if every value is
/// identical the result degrades to a point-mass step there. The final grid
/// value is pinned to exactly 1 so the result is a valid distribution
/// function for dominance integration; the raw kernel mass at the grid end
/// is within 0.005 of 1 already.
pub fn build_kde_cdf(values: &[f64], bandwidth: Option<f64>) -> Result<ParamECDF> {
    if values.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "KDE needs at least 2 values, have {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("non-finite value in KDE input".to_string()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], *sorted.last().unwrap());
    if min == max {
        return Ok(ParamECDF { support: vec![min], cdf: vec![1.0] });
    }

    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => {
            return Err(Error::DegenerateData(format!("bandwidth {h} must be positive")));
        }
        None => silverman_bandwidth(&sorted),
    };

    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let n = sorted.len() as f64;
    let mut support = Vec::with_capacity(512);
    let mut cdf = Vec::with_capacity(512);
    for i in 0..512 {
        let x = lo + (hi - lo) * i as f64 / 511.0;
        let mass: f64 = sorted.iter().map(|&v| normal_cdf((x - v) / h)).sum::<f64>() / n;
        support.push(x);
        cdf.push(mass.min(1.0));
    }
    *cdf.last_mut().unwrap() = 1.0;
    Ok(ParamECDF { support, cdf })
}

/// Silverman's bandwidth with the robust spread estimate. Falls back to the
/// standard deviation when the interquartile range collapses to zero.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Spatial lookup over building locations, backed by an R-tree.
///
/// Coordinates are stored as `(latitude, longitude)` degrees. Query results
/// are sorted by building id, so insertion order never shows through.
#[derive(Debug)]
pub struct SpatialIndex {
    tree: RTree<GeomWithData<[f64; 2], usize>>,
    buildings: Vec<BuildingRecord>,
    bounds: ([f64; 2], [f64; 2]),
}

impl SpatialIndex {
    /// Index a set of buildings. Every building must carry a location.
    pub fn build(buildings: &[BuildingRecord]) -> Result<SpatialIndex> {
        let mut points = Vec::with_capacity(buildings.len());
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for (i, b) in buildings.iter().enumerate() {
            let (lat, lon) = b.location.ok_or_else(|| Error::MissingLocation { id: b.id.clone() })?;
            points.push(GeomWithData::new([lat, lon], i));
            lo[0] = lo[0].min(lat);
            lo[1] = lo[1].min(lon);
            hi[0] = hi[0].max(lat);
            hi[1] = hi[1].max(lon);
        }
        Ok(SpatialIndex {
            tree: RTree::bulk_load(points),
            buildings: buildings.to_vec(),
            bounds: (lo, hi),
        })
    }

    pub fn len(&self) -> usize {
        self.buildings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buildings.is_empty()
    }

    /// All buildings whose location falls inside the inclusive rectangle
    /// `lat_range` x `lon_range`, sorted by id.
    pub fn rect_query(&self, lat_range: (f64, f64), lon_range: (f64, f64)) -> Vec<&BuildingRecord> {
        let envelope =
            AABB::from_corners([lat_range.0, lon_range.0], [lat_range.1, lon_range.1]);
        let mut hits: Vec<&BuildingRecord> = self
            .tree
            .locate_in_envelope(envelope)
            .map(|p| &self.buildings[p.data])
            .collect();
        hits.sort_by(|a, b| a.id.cmp(&b.id));
        hits
    }

    fn covers_everything(&self, lat_range: (f64, f64), lon_range: (f64, f64)) -> bool {
        lat_range.0 <= self.bounds.0[0]
            && lon_range.0 <= self.bounds.0[1]
            && lat_range.1 >= self.bounds.1[0]
            && lon_range.1 >= self.bounds.1[1]
    }
}

/// A request for a reference cohort around a location, matching the
/// candidate building's attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionQuery {
    /// `(latitude, longitude)` degrees.
    pub location: (f64, f64),
    pub property_type: PropertyType,
    pub year_built: i32,
    pub floor_area: f64,
    pub min_cohort: usize,
}

impl RegionQuery {
    pub fn for_building(b: &BuildingRecord) -> Result<RegionQuery> {
        let location = b.location.ok_or_else(|| Error::MissingLocation { id: b.id.clone() })?;
        Ok(RegionQuery {
            location,
            property_type: b.property_type,
            year_built: b.year_built,
            floor_area: b.floor_area,
            min_cohort: DEFAULT_MIN_COHORT,
        })
    }
}

/// Result of an expanding cohort search: the matched buildings sorted by
/// distance from the query point, and how many times the box doubled.
#[derive(Debug, Clone)]
pub struct CohortSearch {
    pub members: Vec<BuildingRecord>,
    pub doublings: usize,
}

/// Find at least `min_cohort` attribute-matching homes around a location.
///
/// Starts from a square box [`INITIAL_BOX_DEG`] across, doubling its side
/// until enough matches accumulate or the box swallows the whole index.
/// Matching means sharing the query's property type, year bucket, and area
/// bucket under `buckets`.
pub fn expanding_cohort(
    index: &SpatialIndex,
    q: &RegionQuery,
    buckets: &BucketSpec,
) -> Result<CohortSearch> {
    if q.min_cohort < 1 {
        return Err(Error::InvalidParams("min_cohort must be at least 1".to_string()));
    }
    let key = buckets.key(q.property_type, q.year_built, q.floor_area);
    let mut side = INITIAL_BOX_DEG;
    let mut doublings = 0;
    loop {
        let half = side / 2.0;
        let lat_range = (q.location.0 - half, q.location.0 + half);
        let lon_range = (q.location.1 - half, q.location.1 + half);
        let matches: Vec<&BuildingRecord> = index
            .rect_query(lat_range, lon_range)
            .into_iter()
            .filter(|b| buckets.key(b.property_type, b.year_built, b.floor_area) == key)
            .collect();

        if matches.len() >= q.min_cohort {
            let mut members: Vec<BuildingRecord> = matches.into_iter().cloned().collect();
            members.sort_by(|a, b| {
                let da = dist_sq(q.location, a.location.unwrap());
                let db = dist_sq(q.location, b.location.unwrap());
                da.total_cmp(&db).then_with(|| a.id.cmp(&b.id))
            });
            return Ok(CohortSearch { members, doublings });
        }
        if index.covers_everything(lat_range, lon_range) {
            return Err(Error::InsufficientCohort { found: matches.len(), need: q.min_cohort });
        }
        side *= 2.0;
        doublings += 1;
    }
}

fn dist_sq(origin: (f64, f64), p: (f64, f64)) -> f64 {
    let (dx, dy) = equirect_offset_m(origin, p);
    dx * dx + dy * dy
}

/// KDE distributions of the three compared parameters over a region cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDistribution {
    pub gamma_heat_cdf: ParamECDF,
    pub gamma_cool_cdf: ParamECDF,
    pub base_cdf: ParamECDF,
    pub member_ids: Vec<String>,
    /// Bandwidths actually used, in [`CompareParam::ALL`] order
    /// (gamma_heat, gamma_cool, base); zero marks a point-mass fallback.
    pub bandwidths: [f64; 3],
}

impl RegionDistribution {
    pub fn cdf(&self, param: CompareParam) -> &ParamECDF {
        match param {
            CompareParam::GammaHeat => &self.gamma_heat_cdf,
            CompareParam::GammaCool => &self.gamma_cool_cdf,
            CompareParam::Base => &self.base_cdf,
        }
    }
}

/// Build the region-wide parameter distributions for a cohort.
///
/// Each member is solved from its annual record; members with no annual
/// record, no usable solution, or a zero-area entry are dropped. If fewer
/// than `min_cohort` members survive, the distribution is not built.
pub fn region_distribution(
    cohort: &[BuildingRecord],
    annuals: &[AnnualRecord],
    weather: &WeatherSeries,
    min_cohort: usize,
) -> Result<RegionDistribution> {
    let by_id: BTreeMap<&str, &AnnualRecord> =
        annuals.iter().map(|r| (r.building_id.as_str(), r)).collect();

    let mut member_ids = Vec::new();
    let mut gh = Vec::new();
    let mut gc = Vec::new();
    let mut base = Vec::new();
    for b in cohort {
        let Some(rec) = by_id.get(b.id.as_str()) else { continue };
        let Ok(p) = solve_annual(rec, weather, b.floor_area) else { continue };
        member_ids.push(b.id.clone());
        gh.push(p.gamma_heat);
        gc.push(p.gamma_cool);
        base.push(p.base);
    }
    if member_ids.len() < min_cohort {
        return Err(Error::InsufficientCohort { found: member_ids.len(), need: min_cohort });
    }

    let kde = |values: &[f64]| -> Result<(ParamECDF, f64)> {
        let cdf = build_kde_cdf(values, None)?;
        let h = if cdf.support.len() == 1 {
            0.0
        } else {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            silverman_bandwidth(&sorted)
        };
        Ok((cdf, h))
    };
    let (gamma_heat_cdf, h_gh) = kde(&gh)?;
    let (gamma_cool_cdf, h_gc) = kde(&gc)?;
    let (base_cdf, h_base) = kde(&base)?;
    Ok(RegionDistribution {
        gamma_heat_cdf,
        gamma_cool_cdf,
        base_cdf,
        member_ids,
        bandwidths: [h_gh, h_gc, h_base],
    })
}
