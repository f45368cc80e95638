//! Ingestion of cumulative confirmed-case CSVs: sub-region rows are
//! aggregated to regions, differenced into daily new cases, and expanded
//! into S/I/R compartments with an ad-hoc removal rate.

use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{EpiSeries, RegionSet};
use crate::error::{Error, Result};

/// Column mapping and ingestion options.
///
/// The defaults match the Johns Hopkins CSSE US confirmed-case layout with
/// the 48 contiguous states retained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Header of the column holding the parent region (state) name.
    pub region_column: String,
    /// Header of the sub-region (county) column, if the file has one.
    pub subregion_column: Option<String>,
    /// Header of the first date column; when `None` the first header that
    /// parses as `m/d/yy` is used.
    pub first_date_column: Option<String>,
    /// Parent region names dropped during aggregation.
    pub exclusions: Vec<String>,
    /// Ad-hoc removal rate (1/day) used to synthesize R from daily cases.
    pub gamma0: f64,
    /// Apply a 7-day centered moving average to daily cases before the
    /// compartment synthesis.
    pub smoothing: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            region_column: "Province_State".to_string(),
            subregion_column: Some("Admin2".to_string()),
            first_date_column: None,
            exclusions: default_us_exclusions(),
            gamma0: 0.1,
            smoothing: false,
        }
    }
}

/// US territories, D.C., Alaska, Hawaii and cruise-ship rows; removing them
/// from the 50-state file leaves the 48 contiguous states.
pub fn default_us_exclusions() -> Vec<String> {
    [
        "Alaska",
        "Hawaii",
        "District of Columbia",
        "American Samoa",
        "Guam",
        "Northern Mariana Islands",
        "Puerto Rico",
        "Virgin Islands",
        "Diamond Princess",
        "Grand Princess",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

/// One parsed row: sub-region, parent region, cumulative counts per day.
#[derive(Debug, Clone)]
pub struct RawCaseRow {
    pub subregion: String,
    pub region: String,
    pub cumulative: Vec<f64>,
}

/// All rows of a confirmed-case file, dates normalized to day offsets
/// (offset 0 = earliest date column). No filtering or aggregation yet.
#[derive(Debug, Clone)]
pub struct RawCaseTable {
    pub day_offsets: Vec<i64>,
    pub rows: Vec<RawCaseRow>,
}

pub fn parse_confirmed_csv(path: &Path, config: &IngestConfig) -> Result<RawCaseTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(format!("{}: {:?}", path.display(), other)),
    })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::schema(format!("{}: {}", path.display(), e)))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let region_idx = headers
        .iter()
        .position(|h| h == &config.region_column)
        .ok_or_else(|| {
            Error::schema(format!(
                "missing region column '{}' in {}",
                config.region_column,
                path.display()
            ))
        })?;
    let subregion_idx = match &config.subregion_column {
        Some(col) => Some(headers.iter().position(|h| h == col).ok_or_else(|| {
            Error::schema(format!(
                "missing sub-region column '{}' in {}",
                col,
                path.display()
            ))
        })?),
        None => None,
    };

    let first_date_idx = match &config.first_date_column {
        Some(col) => headers.iter().position(|h| h == col).ok_or_else(|| {
            Error::schema(format!(
                "missing first date column '{}' in {}",
                col,
                path.display()
            ))
        })?,
        None => headers
            .iter()
            .position(|h| parse_mdy(h).is_some())
            .ok_or_else(|| {
                Error::schema(format!(
                    "no header parses as a m/d/yy date in {}",
                    path.display()
                ))
            })?,
    };

    let mut dates = Vec::new();
    for header in &headers[first_date_idx..] {
        let date = parse_mdy(header).ok_or_else(|| {
            Error::schema(format!("column '{}' is not a m/d/yy date", header))
        })?;
        dates.push(date);
    }
    let first = dates[0];
    let day_offsets: Vec<i64> = dates.iter().map(|d| (*d - first).num_days()).collect();
    for (i, w) in day_offsets.windows(2).enumerate() {
        if w[1] != w[0] + 1 {
            return Err(Error::schema(format!(
                "date columns are not contiguous between '{}' and '{}'",
                headers[first_date_idx + i],
                headers[first_date_idx + i + 1]
            )));
        }
    }

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::schema(format!("row {}: {}", i + 2, e)))?;
        let region = record.get(region_idx).unwrap_or("").trim().to_string();
        let subregion = subregion_idx
            .and_then(|idx| record.get(idx))
            .unwrap_or("")
            .trim()
            .to_string();
        let mut cumulative = Vec::with_capacity(day_offsets.len());
        for (j, offset_col) in (first_date_idx..headers.len()).enumerate() {
            let cell = record.get(offset_col).unwrap_or("").trim();
            let value: f64 = cell.parse().map_err(|e| Error::Cell {
                row: i + 2,
                column: headers[first_date_idx + j].clone(),
                message: format!("{}", e),
            })?;
            cumulative.push(value);
        }
        rows.push(RawCaseRow {
            subregion,
            region,
            cumulative,
        });
    }
    Ok(RawCaseTable { day_offsets, rows })
}

/// Sums sub-region rows into their parent regions, drops excluded names,
/// and orders the output rows like `regions`.
pub fn aggregate_to_regions(
    raw: &RawCaseTable,
    regions: &RegionSet,
    exclusions: &[String],
) -> Result<Array2<f64>> {
    let days = raw.day_offsets.len();
    let mut out = Array2::zeros((regions.len(), days));
    for row in &raw.rows {
        if exclusions.iter().any(|e| e == &row.region) {
            continue;
        }
        let idx = regions
            .index_of(&row.region)
            .ok_or_else(|| Error::UnknownRegion(row.region.clone()))?;
        for (t, v) in row.cumulative.iter().enumerate() {
            out[(idx, t)] += v;
        }
    }
    Ok(out)
}

/// Differences cumulative counts into daily new cases. Day 0 keeps the first
/// cumulative value; negative increments (upstream corrections) clamp to 0.
pub fn cumulative_to_daily(cumulative: &Array2<f64>) -> Array2<f64> {
    let (n, days) = cumulative.dim();
    let mut out = Array2::zeros((n, days));
    for r in 0..n {
        out[(r, 0)] = cumulative[(r, 0)];
        for t in 1..days {
            out[(r, t)] = (cumulative[(r, t)] - cumulative[(r, t - 1)]).max(0.0);
        }
    }
    out
}

/// Number of negative day-over-day increments that `cumulative_to_daily`
/// would clamp.
pub fn negative_increment_count(cumulative: &Array2<f64>) -> usize {
    let (n, days) = cumulative.dim();
    let mut count = 0;
    for r in 0..n {
        for t in 1..days {
            if cumulative[(r, t)] < cumulative[(r, t - 1)] {
                count += 1;
            }
        }
    }
    count
}

/// 7-day centered moving average, window clipped at the series boundaries.
pub fn smooth_centered_7day(daily: &Array2<f64>) -> Array2<f64> {
    let (n, days) = daily.dim();
    let mut out = Array2::zeros((n, days));
    for r in 0..n {
        for t in 0..days {
            let lo = t.saturating_sub(3);
            let hi = (t + 3).min(days - 1);
            let mut sum = 0.0;
            for u in lo..=hi {
                sum += daily[(r, u)];
            }
            out[(r, t)] = sum / (hi - lo + 1) as f64;
        }
    }
    out
}

/// Expands daily new cases into S/I/R by forward Euler with removal rate
/// `gamma0`: I gains the day's cases and loses `gamma0 * I`, R accumulates
/// the removals, S is the residual against the region population.
pub fn synthesize_sir_series(
    new_cases: &Array2<f64>,
    regions: &RegionSet,
    gamma0: f64,
) -> Result<EpiSeries> {
    if !(gamma0 > 0.0 && gamma0 < 1.0) {
        return Err(Error::validation(format!(
            "gamma0 must lie in (0, 1), got {}",
            gamma0
        )));
    }
    let (n, days) = new_cases.dim();
    if n != regions.len() {
        return Err(Error::validation(format!(
            "case matrix has {} regions, region set has {}",
            n,
            regions.len()
        )));
    }
    if days == 0 {
        return Err(Error::validation("case matrix has no days"));
    }
    let mut s = Array2::zeros((n, days));
    let mut i_m = Array2::zeros((n, days));
    let mut r_m = Array2::zeros((n, days));
    let mut nc = Array2::zeros((n, days));
    for r in 0..n {
        let p = regions.populations()[r];
        let mut infected = new_cases[(r, 0)].max(0.0);
        let mut removed = 0.0f64;
        for t in 0..days {
            if t > 0 {
                let removal = gamma0 * infected;
                infected = (infected + new_cases[(r, t)].max(0.0) - removal).max(0.0);
                removed += removal;
            }
            i_m[(r, t)] = infected;
            r_m[(r, t)] = removed;
            s[(r, t)] = (p - infected - removed).max(0.0);
            nc[(r, t)] = new_cases[(r, t)].max(0.0);
        }
    }
    let dates = (0..days as i64).collect();
    EpiSeries::new(dates, s, i_m, r_m, nc)
}

/// Ingest summary written next to the interchange CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub regions: usize,
    pub days: usize,
    pub first_day: i64,
    pub last_day: i64,
    pub clamped_negatives: usize,
    pub smoothed: bool,
    pub gamma0: f64,
}

/// Full ingestion: parse, aggregate, difference, optionally smooth,
/// synthesize compartments.
pub fn ingest(
    cases_path: &Path,
    regions: &RegionSet,
    config: &IngestConfig,
) -> Result<(EpiSeries, IngestSummary)> {
    let raw = parse_confirmed_csv(cases_path, config)?;
    let cumulative = aggregate_to_regions(&raw, regions, &config.exclusions)?;
    let clamped = negative_increment_count(&cumulative);
    let mut daily = cumulative_to_daily(&cumulative);
    if config.smoothing {
        daily = smooth_centered_7day(&daily);
    }
    let series = synthesize_sir_series(&daily, regions, config.gamma0)?;
    let summary = IngestSummary {
        regions: regions.len(),
        days: series.n_days(),
        first_day: series.dates()[0],
        last_day: *series.dates().last().unwrap(),
        clamped_negatives: clamped,
        smoothed: config.smoothing,
        gamma0: config.gamma0,
    };
    Ok((series, summary))
}

fn parse_mdy(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%m/%d/%y").ok()
}
