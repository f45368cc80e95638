//! Core domain types: the region catalog and per-region compartment series.
//!
//! Region order is fixed at construction and shared by every matrix and
//! series in the pipeline; all per-region arrays are indexed in that order.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

/// Ordered catalog of regions with populations and pairwise distances.
#[derive(Debug, Clone)]
pub struct RegionSet {
    names: Vec<String>,
    populations: Array1<f64>,
    distances: Array2<f64>,
    total_population: f64,
}

impl RegionSet {
    /// Distances are center-to-center, in kilometers, zero on the diagonal.
    pub fn new(names: Vec<String>, populations: Vec<f64>, distances: Array2<f64>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::validation("region set must not be empty"));
        }
        if populations.len() != n {
            return Err(Error::validation(format!(
                "{} regions but {} populations",
                n,
                populations.len()
            )));
        }
        if distances.dim() != (n, n) {
            return Err(Error::validation(format!(
                "distance matrix {:?} does not match {} regions",
                distances.dim(),
                n
            )));
        }
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if let Some(prev) = seen.insert(name.clone(), i) {
                return Err(Error::validation(format!(
                    "duplicate region name '{}' at rows {} and {}",
                    name, prev, i
                )));
            }
        }
        for (i, &p) in populations.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::validation(format!(
                    "population of '{}' must be strictly positive, got {}",
                    names[i], p
                )));
            }
        }
        for i in 0..n {
            for j in 0..n {
                let d = distances[(i, j)];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::validation(format!(
                        "distance [{}][{}] must be finite and nonnegative, got {}",
                        i, j, d
                    )));
                }
                if i == j && d != 0.0 {
                    return Err(Error::validation(format!(
                        "diagonal distance for '{}' must be exactly zero, got {}",
                        names[i], d
                    )));
                }
                let dt = distances[(j, i)];
                if (d - dt).abs() > 1e-9 * d.abs().max(dt.abs()).max(1.0) {
                    return Err(Error::validation(format!(
                        "distance matrix not symmetric at [{}][{}]: {} vs {}",
                        i, j, d, dt
                    )));
                }
            }
        }
        let total_population = populations.iter().sum();
        Ok(RegionSet {
            names,
            populations: Array1::from(populations),
            distances,
            total_population,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn populations(&self) -> &Array1<f64> {
        &self.populations
    }

    pub fn distances(&self) -> &Array2<f64> {
        &self.distances
    }

    pub fn total_population(&self) -> f64 {
        self.total_population
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Collapses the catalog into a single region holding the whole population.
    pub fn aggregate(&self) -> RegionSet {
        RegionSet {
            names: vec!["aggregate".to_string()],
            populations: Array1::from(vec![self.total_population]),
            distances: Array2::zeros((1, 1)),
            total_population: self.total_population,
        }
    }

    /// Reads `populations.csv` (columns `region,population`) and a square
    /// distance CSV whose header names the regions. The distance file may
    /// order regions differently; it is realigned to the population order.
    pub fn from_csv_files(populations: &Path, distances: &Path) -> Result<Self> {
        let mut names = Vec::new();
        let mut pops = Vec::new();
        let mut rdr = csv::Reader::from_path(populations)
            .map_err(|e| csv_open_error(populations, e))?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::schema(format!("{}: {}", populations.display(), e)))?
            .clone();
        if headers.len() < 2 {
            return Err(Error::schema(format!(
                "{}: expected columns region,population",
                populations.display()
            )));
        }
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::schema(format!("row {}: {}", i + 2, e)))?;
            let name = record.get(0).unwrap_or("").trim().to_string();
            let pop: f64 = record
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| Error::Cell {
                    row: i + 2,
                    column: headers.get(1).unwrap_or("population").to_string(),
                    message: format!("{}", e),
                })?;
            names.push(name);
            pops.push(pop);
        }

        let (dist_names, dist) = read_matrix_csv(distances)?;
        let n = names.len();
        if dist_names.len() != n {
            return Err(Error::schema(format!(
                "distance file has {} regions, population file has {}",
                dist_names.len(),
                n
            )));
        }
        let mut perm = Vec::with_capacity(n);
        for name in &names {
            let j = dist_names
                .iter()
                .position(|d| d == name)
                .ok_or_else(|| Error::UnknownRegion(name.clone()))?;
            perm.push(j);
        }
        let mut aligned = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                aligned[(i, j)] = dist[(perm[i], perm[j])];
            }
        }
        RegionSet::new(names, pops, aligned)
    }

    pub fn write_csv_files(&self, populations: &Path, distances: &Path) -> Result<()> {
        let mut out = String::from("region,population\n");
        for (name, p) in self.names.iter().zip(self.populations.iter()) {
            out.push_str(&format!("{},{}\n", name, p));
        }
        write_text(populations, &out)?;
        write_matrix_csv(distances, &self.names, &self.distances)
    }
}

/// Per-region daily compartment series plus daily new infections.
///
/// Matrices are `(n_regions, n_days)`; `dates` are integer day offsets with
/// unit steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EpiSeries {
    dates: Vec<i64>,
    susceptible: Array2<f64>,
    infected: Array2<f64>,
    removed: Array2<f64>,
    new_cases: Array2<f64>,
}

impl EpiSeries {
    pub fn new(
        dates: Vec<i64>,
        susceptible: Array2<f64>,
        infected: Array2<f64>,
        removed: Array2<f64>,
        new_cases: Array2<f64>,
    ) -> Result<Self> {
        let days = dates.len();
        if days == 0 {
            return Err(Error::validation("series must cover at least one day"));
        }
        for w in dates.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::validation(format!(
                    "dates must increase in unit steps, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let dim = susceptible.dim();
        if dim.1 != days {
            return Err(Error::validation(format!(
                "matrix has {} day columns but {} dates",
                dim.1, days
            )));
        }
        for (label, m) in [
            ("susceptible", &infected),
            ("removed", &removed),
            ("new_cases", &new_cases),
        ] {
            if m.dim() != dim {
                return Err(Error::validation(format!(
                    "{} shape {:?} does not match {:?}",
                    label,
                    m.dim(),
                    dim
                )));
            }
        }
        for (label, m) in [
            ("susceptible", &susceptible),
            ("infected", &infected),
            ("removed", &removed),
            ("new_cases", &new_cases),
        ] {
            if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::validation(format!(
                    "{} contains a negative or non-finite value",
                    label
                )));
            }
        }
        Ok(EpiSeries {
            dates,
            susceptible,
            infected,
            removed,
            new_cases,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.susceptible.nrows()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[i64] {
        &self.dates
    }

    pub fn susceptible(&self) -> &Array2<f64> {
        &self.susceptible
    }

    pub fn infected(&self) -> &Array2<f64> {
        &self.infected
    }

    pub fn removed(&self) -> &Array2<f64> {
        &self.removed
    }

    pub fn new_cases(&self) -> &Array2<f64> {
        &self.new_cases
    }

    /// Checks S + I + R = P per region and day, within `tol` relative.
    pub fn validate_conservation(&self, regions: &RegionSet, tol: f64) -> Result<()> {
        if regions.len() != self.n_regions() {
            return Err(Error::validation(format!(
                "series has {} regions, region set has {}",
                self.n_regions(),
                regions.len()
            )));
        }
        for r in 0..self.n_regions() {
            let p = regions.populations()[r];
            for t in 0..self.n_days() {
                let total = self.susceptible[(r, t)] + self.infected[(r, t)] + self.removed[(r, t)];
                if (total - p).abs() > tol * p.abs().max(1.0) {
                    return Err(Error::validation(format!(
                        "S+I+R = {} differs from population {} for region {} on day {}",
                        total, p, r, self.dates[t]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Copies out days `[start, start + len)`.
    pub fn slice_days(&self, start: usize, len: usize) -> Result<EpiSeries> {
        if len == 0 || start + len > self.n_days() {
            return Err(Error::validation(format!(
                "day slice [{start}, {}) out of range for {} days",
                start + len,
                self.n_days()
            )));
        }
        let range = ndarray::s![.., start..start + len];
        Ok(EpiSeries {
            dates: self.dates[start..start + len].to_vec(),
            susceptible: self.susceptible.slice(range).to_owned(),
            infected: self.infected.slice(range).to_owned(),
            removed: self.removed.slice(range).to_owned(),
            new_cases: self.new_cases.slice(range).to_owned(),
        })
    }

    /// Sums all regions into a single aggregate series.
    pub fn aggregate(&self) -> EpiSeries {
        let collapse = |m: &Array2<f64>| {
            m.sum_axis(Axis(0))
                .insert_axis(Axis(0))
                .to_owned()
        };
        EpiSeries {
            dates: self.dates.clone(),
            susceptible: collapse(&self.susceptible),
            infected: collapse(&self.infected),
            removed: collapse(&self.removed),
            new_cases: collapse(&self.new_cases),
        }
    }

    /// Rebases dates so the first day equals `first_day`.
    pub fn with_first_day(mut self, first_day: i64) -> EpiSeries {
        let shift = first_day - self.dates[0];
        for d in &mut self.dates {
            *d += shift;
        }
        self
    }

    /// Interchange CSV: `region, day, S, I, R, new_cases`, one row per
    /// region per day, full round-trip float precision.
    pub fn write_csv(&self, path: &Path, names: &[String]) -> Result<()> {
        if names.len() != self.n_regions() {
            return Err(Error::validation(format!(
                "{} names for {} regions",
                names.len(),
                self.n_regions()
            )));
        }
        let mut out = String::from("region,day,S,I,R,new_cases\n");
        for r in 0..self.n_regions() {
            for t in 0..self.n_days() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    names[r],
                    self.dates[t],
                    self.susceptible[(r, t)],
                    self.infected[(r, t)],
                    self.removed[(r, t)],
                    self.new_cases[(r, t)],
                ));
            }
        }
        write_text(path, &out)
    }

    pub fn read_csv(path: &Path) -> Result<(Vec<String>, EpiSeries)> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_open_error(path, e))?;
        let mut names: Vec<String> = Vec::new();
        let mut rows: HashMap<String, Vec<(i64, [f64; 4])>> = HashMap::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::schema(format!("row {}: {}", i + 2, e)))?;
            if record.len() != 6 {
                return Err(Error::schema(format!(
                    "row {}: expected 6 columns, got {}",
                    i + 2,
                    record.len()
                )));
            }
            let region = record[0].to_string();
            let parse = |j: usize, col: &str| -> Result<f64> {
                record[j].trim().parse().map_err(|e| Error::Cell {
                    row: i + 2,
                    column: col.to_string(),
                    message: format!("{}", e),
                })
            };
            let day: i64 = record[1].trim().parse().map_err(|e| Error::Cell {
                row: i + 2,
                column: "day".to_string(),
                message: format!("{}", e),
            })?;
            let vals = [
                parse(2, "S")?,
                parse(3, "I")?,
                parse(4, "R")?,
                parse(5, "new_cases")?,
            ];
            if !rows.contains_key(&region) {
                names.push(region.clone());
            }
            rows.entry(region).or_default().push((day, vals));
        }
        if names.is_empty() {
            return Err(Error::schema(format!("{}: no data rows", path.display())));
        }
        let days = rows[&names[0]].len();
        let dates: Vec<i64> = rows[&names[0]].iter().map(|(d, _)| *d).collect();
        let n = names.len();
        let mut s = Array2::zeros((n, days));
        let mut inf = Array2::zeros((n, days));
        let mut rem = Array2::zeros((n, days));
        let mut nc = Array2::zeros((n, days));
        for (r, name) in names.iter().enumerate() {
            let series = &rows[name];
            if series.len() != days {
                return Err(Error::schema(format!(
                    "region '{}' has {} days, expected {}",
                    name,
                    series.len(),
                    days
                )));
            }
            for (t, (day, vals)) in series.iter().enumerate() {
                if *day != dates[t] {
                    return Err(Error::schema(format!(
                        "region '{}' day {} does not match leading region's day {}",
                        name, day, dates[t]
                    )));
                }
                s[(r, t)] = vals[0];
                inf[(r, t)] = vals[1];
                rem[(r, t)] = vals[2];
                nc[(r, t)] = vals[3];
            }
        }
        Ok((names, EpiSeries::new(dates, s, inf, rem, nc)?))
    }
}

/// Square matrix interchange CSV with a header row of region names.
pub fn write_matrix_csv(path: &Path, names: &[String], matrix: &Array2<f64>) -> Result<()> {
    let n = names.len();
    if matrix.dim() != (n, n) {
        return Err(Error::validation(format!(
            "matrix {:?} does not match {} names",
            matrix.dim(),
            n
        )));
    }
    let mut out = String::from("region");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for i in 0..n {
        out.push_str(&names[i]);
        for j in 0..n {
            out.push(',');
            out.push_str(&format!("{}", matrix[(i, j)]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_open_error(path, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::schema(format!("{}: {}", path.display(), e)))?;
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let n = names.len();
    if n == 0 {
        return Err(Error::schema(format!(
            "{}: matrix header names no regions",
            path.display()
        )));
    }
    let mut matrix = Array2::zeros((n, n));
    let mut row_count = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::schema(format!("row {}: {}", i + 2, e)))?;
        if record.len() != n + 1 {
            return Err(Error::schema(format!(
                "row {}: expected {} columns, got {}",
                i + 2,
                n + 1,
                record.len()
            )));
        }
        if i >= n {
            return Err(Error::schema(format!(
                "matrix has more rows than header names ({})",
                n
            )));
        }
        for j in 0..n {
            matrix[(i, j)] = record[j + 1].trim().parse().map_err(|e| Error::Cell {
                row: i + 2,
                column: names[j].clone(),
                message: format!("{}", e),
            })?;
        }
        row_count += 1;
    }
    if row_count != n {
        return Err(Error::schema(format!(
            "matrix has {} rows for {} header names",
            row_count, n
        )));
    }
    Ok((names, matrix))
}

pub(crate) fn write_text(path: &Path, content: &str) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(content.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn csv_open_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(format!("{}: {:?}", path.display(), other)),
    }
}
