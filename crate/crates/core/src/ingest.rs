//! CSV ingestion and serialization for the four on-disk dataset formats.
//!
//! All formats use a fixed header row and ISO-8601 calendar dates. Energies
//! are kWh, temperatures Fahrenheit, areas square feet. Loaders reject rows
//! that violate the documented invariants and report the offending row and
//! column; row numbers are 1-based counting the header as row 1.
//!
//! Formats:
//! - `buildings.csv`: `id,property_type,year_built,floor_area_sqft,latitude,longitude`
//!   (the last two may be empty)
//! - `energy.csv`: `building_id,date,kwh`
//! - `weather.csv`: `date,mean_temp_f`
//! - `annual.csv`: `building_id,total_kwh,heating_kwh,cooling_kwh`

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// kBtu per kWh.
pub const KBTU_PER_KWH: f64 = 3.412;

/// Minimum plausible construction year accepted by [`load_buildings`].
pub const MIN_YEAR_BUILT: i32 = 1600;

/// Broad category of a building, as recorded in `buildings.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyType {
    SingleFamily,
    MultiFamily,
    Apartment,
    MixedUse,
}

impl PropertyType {
    /// The `property_type` column spelling for this variant.
    pub fn as_str(self) -> &'static str {
        match self {
            PropertyType::SingleFamily => "single_family",
            PropertyType::MultiFamily => "multi_family",
            PropertyType::Apartment => "apartment",
            PropertyType::MixedUse => "mixed_use",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "single_family" => Some(PropertyType::SingleFamily),
            "multi_family" => Some(PropertyType::MultiFamily),
            "apartment" => Some(PropertyType::Apartment),
            "mixed_use" => Some(PropertyType::MixedUse),
            _ => None,
        }
    }
}

/// Static metadata for one building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingRecord {
    pub id: String,
    pub property_type: PropertyType,
    pub year_built: i32,
    /// Conditioned floor area in square feet; always positive.
    pub floor_area: f64,
    /// `(latitude, longitude)` in degrees, when known.
    pub location: Option<(f64, f64)>,
}

/// A daily energy trace for one building, in kWh per day.
///
/// Dates are strictly increasing and energies are finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub building_id: String,
    pub days: Vec<(NaiveDate, f64)>,
}

/// Daily mean outdoor temperature, °F, with strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    pub days: Vec<(NaiveDate, f64)>,
}

/// Annual consumption totals for one building, kWh per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualRecord {
    pub building_id: String,
    pub total: f64,
    pub heating: f64,
    pub cooling: f64,
}

/// An energy trace joined with weather on matching dates.
///
/// Stored columnar for the fitters: `dates`, `energy`, and `temp` all have
/// equal length. `coverage` is the fraction of the energy trace's days that
/// found a weather match.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    pub building_id: String,
    pub dates: Vec<NaiveDate>,
    /// kWh per day (or kWh/sq.ft. per day after area normalization).
    pub energy: Vec<f64>,
    /// Mean daily temperature, °F.
    pub temp: Vec<f64>,
    pub coverage: f64,
}

impl AlignedSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// The energy half of the pairing, as a standalone trace.
    pub fn to_daily(&self) -> DailySeries {
        DailySeries {
            building_id: self.building_id.clone(),
            days: self.dates.iter().copied().zip(self.energy.iter().copied()).collect(),
        }
    }
}

struct Columns {
    file: String,
    index: BTreeMap<String, usize>,
}

impl Columns {
    fn new(file: &str, headers: &csv::StringRecord, required: &[&str]) -> Result<Self> {
        let index: BTreeMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        for &name in required {
            if !index.contains_key(name) {
                return Err(Error::MissingColumn { file: file.to_string(), column: name.to_string() });
            }
        }
        Ok(Columns { file: file.to_string(), index })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, column: &str, row: usize) -> Result<&'r str> {
        record.get(self.index[column]).map(str::trim).ok_or_else(|| Error::BadValue {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            reason: "field missing".to_string(),
        })
    }

    fn bad(&self, row: usize, column: &str, reason: impl Into<String>) -> Error {
        Error::BadValue {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            reason: reason.into(),
        }
    }

    fn f64(&self, record: &csv::StringRecord, column: &str, row: usize) -> Result<f64> {
        let s = self.get(record, column, row)?;
        let v: f64 = s
            .parse()
            .map_err(|_| self.bad(row, column, format!("`{s}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.bad(row, column, "value is not finite"));
        }
        Ok(v)
    }

    fn date(&self, record: &csv::StringRecord, column: &str, row: usize) -> Result<NaiveDate> {
        let s = self.get(record, column, row)?;
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| self.bad(row, column, format!("`{s}` is not an ISO-8601 date")))
    }
}

fn open_reader(path: &Path) -> Result<(csv::Reader<std::fs::File>, String)> {
    let file = path.display().to_string();
    let reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    Ok((reader, file))
}

/// Load `buildings.csv`, validating every row.
pub fn load_buildings(path: &Path) -> Result<Vec<BuildingRecord>> {
    let (mut reader, file) = open_reader(path)?;
    let cols = Columns::new(
        &file,
        reader.headers()?,
        &["id", "property_type", "year_built", "floor_area_sqft", "latitude", "longitude"],
    )?;
    let current_year = chrono::Utc::now().year();

    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;

        let id = cols.get(&record, "id", row)?.to_string();
        if id.is_empty() {
            return Err(cols.bad(row, "id", "empty id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { file: file.clone(), row, id });
        }

        let type_str = cols.get(&record, "property_type", row)?;
        let property_type = PropertyType::parse(type_str)
            .ok_or_else(|| cols.bad(row, "property_type", format!("unknown type `{type_str}`")))?;

        let year_raw = cols.get(&record, "year_built", row)?;
        let year_built: i32 = year_raw
            .parse()
            .map_err(|_| cols.bad(row, "year_built", format!("`{year_raw}` is not a year")))?;
        if year_built < MIN_YEAR_BUILT || year_built > current_year {
            return Err(cols.bad(
                row,
                "year_built",
                format!("{year_built} outside [{MIN_YEAR_BUILT}, {current_year}]"),
            ));
        }

        let floor_area = cols.f64(&record, "floor_area_sqft", row)?;
        if floor_area <= 0.0 {
            return Err(cols.bad(row, "floor_area_sqft", "floor area must be positive"));
        }

        let lat_str = cols.get(&record, "latitude", row)?;
        let lon_str = cols.get(&record, "longitude", row)?;
        let location = match (lat_str.is_empty(), lon_str.is_empty()) {
            (true, true) => None,
            (false, false) => {
                let lat = cols.f64(&record, "latitude", row)?;
                let lon = cols.f64(&record, "longitude", row)?;
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(cols.bad(row, "latitude", "latitude outside [-90, 90]"));
                }
                if !(-180.0..=180.0).contains(&lon) {
                    return Err(cols.bad(row, "longitude", "longitude outside [-180, 180]"));
                }
                Some((lat, lon))
            }
            (true, false) => return Err(cols.bad(row, "latitude", "latitude empty but longitude set")),
            (false, true) => return Err(cols.bad(row, "longitude", "longitude empty but latitude set")),
        };

        out.push(BuildingRecord { id, property_type, year_built, floor_area, location });
    }
    Ok(out)
}

/// Write `buildings.csv` in the documented format.
pub fn write_buildings(path: &Path, records: &[BuildingRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["id", "property_type", "year_built", "floor_area_sqft", "latitude", "longitude"])?;
    for r in records {
        let (lat, lon) = match r.location {
            Some((lat, lon)) => (lat.to_string(), lon.to_string()),
            None => (String::new(), String::new()),
        };
        writer.write_record([
            r.id.as_str(),
            r.property_type.as_str(),
            &r.year_built.to_string(),
            &r.floor_area.to_string(),
            &lat,
            &lon,
        ])?;
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

/// Load `energy.csv`, grouping rows into one trace per building.
///
/// Rows may arrive in any order; each trace is sorted by date. A repeated
/// `(building_id, date)` pair is rejected. Traces are returned sorted by
/// building id.
pub fn load_energy(path: &Path) -> Result<Vec<DailySeries>> {
    let (mut reader, file) = open_reader(path)?;
    let cols = Columns::new(&file, reader.headers()?, &["building_id", "date", "kwh"])?;

    let mut by_building: BTreeMap<String, BTreeMap<NaiveDate, (f64, usize)>> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;

        let id = cols.get(&record, "building_id", row)?.to_string();
        if id.is_empty() {
            return Err(cols.bad(row, "building_id", "empty building id"));
        }
        let date = cols.date(&record, "date", row)?;
        let kwh = cols.f64(&record, "kwh", row)?;
        if kwh < 0.0 {
            return Err(cols.bad(row, "kwh", "energy must be nonnegative"));
        }

        if by_building.entry(id.clone()).or_default().insert(date, (kwh, row)).is_some() {
            return Err(cols.bad(row, "date", format!("duplicate date {date} for building `{id}`")));
        }
    }

    Ok(by_building
        .into_iter()
        .map(|(building_id, days)| DailySeries {
            building_id,
            days: days.into_iter().map(|(d, (kwh, _))| (d, kwh)).collect(),
        })
        .collect())
}

/// Write `energy.csv` from a set of traces.
pub fn write_energy(path: &Path, traces: &[DailySeries]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["building_id", "date", "kwh"])?;
    for t in traces {
        for (date, kwh) in &t.days {
            writer.write_record([t.building_id.as_str(), &date.to_string(), &kwh.to_string()])?;
        }
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

/// Load `weather.csv`. Rows may arrive in any order; duplicate dates are
/// rejected and temperatures must lie within [-60, 140] °F.
pub fn load_weather(path: &Path) -> Result<WeatherSeries> {
    let (mut reader, file) = open_reader(path)?;
    let cols = Columns::new(&file, reader.headers()?, &["date", "mean_temp_f"])?;

    let mut days: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;

        let date = cols.date(&record, "date", row)?;
        let temp = cols.f64(&record, "mean_temp_f", row)?;
        if !(-60.0..=140.0).contains(&temp) {
            return Err(cols.bad(row, "mean_temp_f", "temperature outside [-60, 140] °F"));
        }
        if days.insert(date, temp).is_some() {
            return Err(cols.bad(row, "date", format!("duplicate date {date}")));
        }
    }
    Ok(WeatherSeries { days: days.into_iter().collect() })
}

/// Write `weather.csv`.
pub fn write_weather(path: &Path, weather: &WeatherSeries) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["date", "mean_temp_f"])?;
    for (date, temp) in &weather.days {
        writer.write_record([date.to_string().as_str(), &temp.to_string()])?;
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

/// Load `annual.csv`. Heating plus cooling may not exceed the total.
pub fn load_annual(path: &Path) -> Result<Vec<AnnualRecord>> {
    let (mut reader, file) = open_reader(path)?;
    let cols = Columns::new(
        &file,
        reader.headers()?,
        &["building_id", "total_kwh", "heating_kwh", "cooling_kwh"],
    )?;

    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;

        let building_id = cols.get(&record, "building_id", row)?.to_string();
        if building_id.is_empty() {
            return Err(cols.bad(row, "building_id", "empty building id"));
        }
        if !seen.insert(building_id.clone()) {
            return Err(Error::DuplicateId { file: file.clone(), row, id: building_id });
        }

        let total = cols.f64(&record, "total_kwh", row)?;
        let heating = cols.f64(&record, "heating_kwh", row)?;
        let cooling = cols.f64(&record, "cooling_kwh", row)?;
        for (name, v) in [("total_kwh", total), ("heating_kwh", heating), ("cooling_kwh", cooling)] {
            if v < 0.0 {
                return Err(cols.bad(row, name, "energy must be nonnegative"));
            }
        }
        // Tiny slack so totals assembled from rounded components still load.
        if heating + cooling > total * (1.0 + 1e-9) + 1e-9 {
            return Err(cols.bad(row, "total_kwh", "heating + cooling exceeds total"));
        }

        out.push(AnnualRecord { building_id, total, heating, cooling });
    }
    Ok(out)
}

/// Write `annual.csv`.
pub fn write_annual(path: &Path, records: &[AnnualRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["building_id", "total_kwh", "heating_kwh", "cooling_kwh"])?;
    for r in records {
        writer.write_record([
            r.building_id.as_str(),
            &r.total.to_string(),
            &r.heating.to_string(),
            &r.cooling.to_string(),
        ])?;
    }
    writer.flush().map_err(Error::Io)?;
    Ok(())
}

/// Join an energy trace with weather on matching dates.
///
/// Both inputs must be non-empty. The output keeps only dates present in both,
/// in date order, and records the fraction of energy days that were matched.
pub fn align(series: &DailySeries, weather: &WeatherSeries) -> Result<AlignedSeries> {
    if series.days.is_empty() || weather.days.is_empty() {
        return Err(Error::NoOverlap);
    }
    let temps: BTreeMap<NaiveDate, f64> = weather.days.iter().copied().collect();

    let mut dates = Vec::new();
    let mut energy = Vec::new();
    let mut temp = Vec::new();
    for &(date, kwh) in &series.days {
        if let Some(&t) = temps.get(&date) {
            dates.push(date);
            energy.push(kwh);
            temp.push(t);
        }
    }
    if dates.is_empty() {
        return Err(Error::NoOverlap);
    }
    let coverage = dates.len() as f64 / series.days.len() as f64;
    Ok(AlignedSeries { building_id: series.building_id.clone(), dates, energy, temp, coverage })
}

/// Divide every energy value by the building's floor area, yielding
/// kWh/sq.ft. per day.
pub fn normalize_by_area(series: &DailySeries, building: &BuildingRecord) -> Result<DailySeries> {
    if building.floor_area <= 0.0 {
        return Err(Error::ZeroArea { id: building.id.clone() });
    }
    Ok(DailySeries {
        building_id: series.building_id.clone(),
        days: series.days.iter().map(|&(d, kwh)| (d, kwh / building.floor_area)).collect(),
    })
}

/// Convert kWh to kBtu.
pub fn to_kbtu(kwh: f64) -> f64 {
    kwh * KBTU_PER_KWH
}

/// Sum several traces (for example gas and electric meters of one home) into
/// one, by date. The union of all dates is kept; a trace missing a date simply
/// contributes nothing that day. The building id of the first trace is used.
pub fn sum_traces(traces: &[DailySeries]) -> Result<DailySeries> {
    let first = traces.first().ok_or_else(|| {
        Error::DegenerateData("sum_traces requires at least one trace".to_string())
    })?;
    let mut totals: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for t in traces {
        for &(date, kwh) in &t.days {
            *totals.entry(date).or_insert(0.0) += kwh;
        }
    }
    Ok(DailySeries { building_id: first.building_id.clone(), days: totals.into_iter().collect() })
}
