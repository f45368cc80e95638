//! Rolling-origin evaluation: per-region fit quality on daily new
//! infections, the fit-vs-population correlation, and the national
//! comparison against the grid-fit standard SIR baseline.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::domain::{EpiSeries, RegionSet};
use crate::error::{Error, Result};
use crate::estimator::{self, ModelState, TrainConfig};
use crate::sir::{fit_standard_sir, metapop_simulate, standard_sir_simulate, MetapopState, ParamGrid};

/// Coefficient of determination on daily new infections.
pub fn r_squared(predicted: &[f64], observed: &[f64]) -> Result<f64> {
    if predicted.len() != observed.len() {
        return Err(Error::validation(format!(
            "series lengths differ: {} vs {}",
            predicted.len(),
            observed.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::validation("need at least two points for R^2"));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::validation(
            "observed series is constant; R^2 variance undefined",
        ));
    }
    let ss_res: f64 = predicted
        .iter()
        .zip(observed.iter())
        .map(|(p, o)| (p - o).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionFit {
    pub region: String,
    pub r_squared: f64,
    pub population: f64,
}

/// Pearson correlation between per-region R^2 and log10 population.
pub fn population_correlation(rows: &[RegionFit]) -> Result<f64> {
    if rows.len() < 3 {
        return Err(Error::validation(format!(
            "need at least 3 regions for the correlation, got {}",
            rows.len()
        )));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.population.log10()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.r_squared).collect();
    pearson(&xs, &ys)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::validation(
            "degenerate variance; correlation undefined",
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NationalComparison {
    pub horizon: usize,
    pub model_mae: f64,
    pub baseline_mae: f64,
    pub baseline_beta: f64,
    pub baseline_gamma: f64,
}

/// One prediction/observation pair for the plot-data export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotRow {
    pub horizon: usize,
    pub region: String,
    pub day: i64,
    pub observed: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Split convention recorded for provenance; the test window is the
    /// chronological tail.
    pub split: String,
    pub seed: u64,
    pub config_echo: TrainConfig,
    /// Per-region fit at the smallest requested horizon.
    pub per_region: Vec<RegionFit>,
    pub national: Vec<NationalComparison>,
    /// Pearson r of R^2 against log10 population; absent when fewer than
    /// three regions have a defined R^2.
    pub correlation: Option<f64>,
    /// Regions whose observed test series was constant (R^2 undefined).
    pub skipped_regions: Vec<String>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::validation(format!("report serialization failed: {e}")))?;
        crate::domain::write_text(path, &json)
    }

    pub fn read_json(path: &Path) -> Result<EvalReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    /// Flat CSV: per-region rows, then one national row per horizon.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out =
            String::from("record,region,population,r_squared,horizon,model_mae,baseline_mae\n");
        for row in &self.per_region {
            out.push_str(&format!(
                "region,{},{},{},,,\n",
                row.region, row.population, row.r_squared
            ));
        }
        for n in &self.national {
            out.push_str(&format!(
                "national,,,,{},{},{}\n",
                n.horizon, n.model_mae, n.baseline_mae
            ));
        }
        crate::domain::write_text(path, &out)
    }
}

/// Plot-data CSV: `horizon, region, day, observed, predicted`.
pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut out = String::from("horizon,region,day,observed,predicted\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.horizon, row.region, row.day, row.observed, row.predicted
        ));
    }
    crate::domain::write_text(path, &out)
}

/// Rolling-origin evaluation over the chronological test split.
///
/// For every test origin the model sees only the window ending at the
/// origin, forecasts `max(horizons)` days with one forward pass, and the
/// h-step-ahead predictions are scored against the observed daily new
/// infections. The national aggregate is compared against a standard SIR
/// baseline grid-fit on the pre-test national series.
pub fn evaluate(
    model: &ModelState,
    dataset: &EpiSeries,
    regions: &RegionSet,
    horizons: &[usize],
    grid: &ParamGrid,
) -> Result<(EvalReport, Vec<PlotRow>)> {
    if horizons.is_empty() {
        return Err(Error::validation("need at least one horizon"));
    }
    let mut horizons = horizons.to_vec();
    horizons.sort_unstable();
    horizons.dedup();
    if horizons[0] == 0 {
        return Err(Error::validation("horizons must be positive"));
    }
    let h_max = *horizons.last().unwrap();
    let t_in = model.config.window;
    let needed = t_in + model.config.horizon;
    if dataset.n_days() <= needed {
        return Err(Error::validation(format!(
            "dataset too short for evaluation: {} days, need more than {}",
            dataset.n_days(),
            needed
        )));
    }
    let n_samples = dataset.n_days() - needed + 1;
    let (_, _, test_range) = estimator::chronological_split(n_samples);
    if test_range.is_empty() {
        return Err(Error::validation("test split is empty"));
    }

    let n = regions.len();
    let interaction = model.interaction_matrix(regions)?;
    let national = dataset.aggregate();

    // baseline fit sees only data strictly before the first test target day
    let fit_cut = test_range.start + t_in;
    let baseline_fit = fit_standard_sir(&national.slice_days(0, fit_cut)?, grid)?;
    let national_population = national.susceptible()[(0, 0)]
        + national.infected()[(0, 0)]
        + national.removed()[(0, 0)];

    // per horizon: (target_day, per-region predictions, national prediction,
    // baseline prediction)
    struct Point {
        day_index: usize,
        regional: Vec<f64>,
        national_model: f64,
        national_baseline: f64,
    }
    let mut points: Vec<Vec<Point>> = horizons.iter().map(|_| Vec::new()).collect();

    for w in test_range.clone() {
        let origin = w + t_in - 1; // last observed day of the window
        let window = dataset.slice_days(w, t_in)?;
        let track = estimator::forward(model, &window, regions)?;
        let track = crate::sir::ParamTrack::new(
            {
                let mut b = Array2::zeros((n, h_max));
                for t in 0..h_max {
                    b.column_mut(t).assign(&track.beta().column(0));
                }
                b
            },
            {
                let mut g = Array2::zeros((n, h_max));
                for t in 0..h_max {
                    g.column_mut(t).assign(&track.gamma().column(0));
                }
                g
            },
        )?;
        let initial = MetapopState::from_series(dataset, origin)?;
        let sim = metapop_simulate(&initial, &track, &interaction, h_max)?;
        let baseline_sim = standard_sir_simulate(
            national.susceptible()[(0, origin)],
            national.infected()[(0, origin)],
            national.removed()[(0, origin)],
            baseline_fit.beta,
            baseline_fit.gamma,
            national_population,
            h_max,
        )?;
        for (hi, &h) in horizons.iter().enumerate() {
            let target = origin + h;
            if target >= dataset.n_days() {
                continue;
            }
            let regional: Vec<f64> = (0..n).map(|r| sim.new_cases()[(r, h - 1)]).collect();
            let national_model = regional.iter().sum();
            points[hi].push(Point {
                day_index: target,
                regional,
                national_model,
                national_baseline: baseline_sim.new_cases[h - 1],
            });
        }
    }

    let mut per_region = Vec::new();
    let mut skipped_regions = Vec::new();
    let mut national_rows = Vec::new();
    let mut plot_rows = Vec::new();

    for (hi, &h) in horizons.iter().enumerate() {
        let pts = &points[hi];
        if pts.is_empty() {
            return Err(Error::validation(format!(
                "no test origins can score horizon {h}"
            )));
        }
        let mut model_mae = 0.0;
        let mut baseline_mae = 0.0;
        for p in pts {
            let obs_national: f64 = (0..n).map(|r| dataset.new_cases()[(r, p.day_index)]).sum();
            model_mae += (p.national_model - obs_national).abs();
            baseline_mae += (p.national_baseline - obs_national).abs();
            for r in 0..n {
                plot_rows.push(PlotRow {
                    horizon: h,
                    region: regions.names()[r].clone(),
                    day: dataset.dates()[p.day_index],
                    observed: dataset.new_cases()[(r, p.day_index)],
                    predicted: p.regional[r],
                });
            }
        }
        model_mae /= pts.len() as f64;
        baseline_mae /= pts.len() as f64;
        national_rows.push(NationalComparison {
            horizon: h,
            model_mae,
            baseline_mae,
            baseline_beta: baseline_fit.beta,
            baseline_gamma: baseline_fit.gamma,
        });

        if hi == 0 {
            for r in 0..n {
                let predicted: Vec<f64> = pts.iter().map(|p| p.regional[r]).collect();
                let observed: Vec<f64> = pts
                    .iter()
                    .map(|p| dataset.new_cases()[(r, p.day_index)])
                    .collect();
                match r_squared(&predicted, &observed) {
                    Ok(r2) => per_region.push(RegionFit {
                        region: regions.names()[r].clone(),
                        r_squared: r2,
                        population: regions.populations()[r],
                    }),
                    Err(_) => skipped_regions.push(regions.names()[r].clone()),
                }
            }
        }
    }

    let correlation = if per_region.len() >= 3 {
        population_correlation(&per_region).ok()
    } else {
        None
    };

    let report = EvalReport {
        split: "chronological 70/10/20 over sliding windows".to_string(),
        seed: model.seed,
        config_echo: model.config.clone(),
        per_region,
        national: national_rows,
        correlation,
        skipped_regions,
    };
    Ok((report, plot_rows))
}
