//! Sliding-window training loop: chronological split, full-batch Adam over
//! the windowed MAE loss, best-validation model selection. Fully
//! deterministic for a fixed seed.

use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::domain::{EpiSeries, RegionSet};
use crate::error::{Error, Result};
use crate::mobility::MobilityConfig;
use crate::sir::{metapop_simulate, MetapopState, ParamTrack};

use super::graph::{build_loss_graph, forward_track, window_features};
use super::{ModelState, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: f64,
}

/// Chronological 70/10/20 split over sliding-window sample starts; windows
/// never shuffle, so later samples cannot leak into training.
pub fn chronological_split(n_samples: usize) -> (Range<usize>, Range<usize>, Range<usize>) {
    let train_end = (n_samples * 7) / 10;
    let val_end = train_end + n_samples / 10;
    (0..train_end, train_end..val_end, val_end..n_samples)
}

struct Sample {
    window_start: usize,
    init_susceptible: Array1<f64>,
    init_infected: Array1<f64>,
    targets: Array2<f64>,
}

fn collect_samples(
    dataset: &EpiSeries,
    config: &TrainConfig,
    starts: Range<usize>,
) -> Vec<Sample> {
    let n = dataset.n_regions();
    let t_in = config.window;
    let horizon = config.horizon;
    starts
        .map(|w| {
            let last = w + t_in - 1;
            let mut targets = Array2::zeros((horizon, n));
            for step in 0..horizon {
                for r in 0..n {
                    targets[(step, r)] = dataset.new_cases()[(r, last + 1 + step)];
                }
            }
            Sample {
                window_start: w,
                init_susceptible: dataset.susceptible().column(last).to_owned(),
                init_infected: dataset.infected().column(last).to_owned(),
                targets,
            }
        })
        .collect()
}

fn sample_loss(
    model: &ModelState,
    features: &[Array2<f64>],
    populations: &Array1<f64>,
    sample: &Sample,
) -> f64 {
    let t_in = model.config.window;
    let window = &features[sample.window_start..sample.window_start + t_in];
    let graph = build_loss_graph(
        model,
        window,
        populations,
        &sample.init_susceptible,
        &sample.init_infected,
        &sample.targets,
    );
    graph.tape.scalar_value(graph.loss)
}

/// Trains on stride-1 sliding windows and returns the model with the best
/// validation MAE together with the per-epoch loss history.
pub fn train(
    dataset: &EpiSeries,
    regions: &RegionSet,
    mobility: &MobilityConfig,
    config: &TrainConfig,
) -> Result<(ModelState, Vec<LossRecord>)> {
    config.validate()?;
    if dataset.n_regions() != regions.len() {
        return Err(Error::validation(format!(
            "dataset covers {} regions, region set has {}",
            dataset.n_regions(),
            regions.len()
        )));
    }
    let needed = config.window + config.horizon;
    if dataset.n_days() <= needed {
        return Err(Error::validation(format!(
            "dataset too short: {} days, need more than window + horizon = {}",
            dataset.n_days(),
            needed
        )));
    }
    let n_samples = dataset.n_days() - needed + 1;
    let (train_range, val_range, test_range) = chronological_split(n_samples);
    if train_range.is_empty() || val_range.is_empty() || test_range.is_empty() {
        return Err(Error::validation(format!(
            "dataset too short: {} sliding windows cannot fill a 70/10/20 split",
            n_samples
        )));
    }

    let features = window_features(dataset, regions)?;
    let populations = regions.populations().clone();
    let train_samples = collect_samples(dataset, config, train_range);
    let val_samples = collect_samples(dataset, config, val_range);

    let mut model = ModelState::init(regions, mobility, config)?;
    let param_count = model.param_count();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, ModelState)> = None;

    for epoch in 0..config.epochs {
        let mut grad_acc = vec![0.0; param_count];
        let mut train_loss = 0.0;
        for sample in &train_samples {
            let t_in = config.window;
            let window = &features[sample.window_start..sample.window_start + t_in];
            let graph = build_loss_graph(
                &model,
                window,
                &populations,
                &sample.init_susceptible,
                &sample.init_infected,
                &sample.targets,
            );
            train_loss += graph.tape.scalar_value(graph.loss);
            let grads = graph.tape.backward(graph.loss);
            let mut offset = 0;
            for leaf in &graph.flat_leaves {
                for g in grads.get(*leaf).iter() {
                    grad_acc[offset] += g;
                    offset += 1;
                }
            }
        }
        let scale = 1.0 / train_samples.len() as f64;
        for g in &mut grad_acc {
            *g *= scale;
        }
        train_loss *= scale;
        model.adam_step(&grad_acc)?;

        let val_mae = val_samples
            .iter()
            .map(|s| sample_loss(&model, &features, &populations, s))
            .sum::<f64>()
            / val_samples.len() as f64;
        history.push(LossRecord {
            epoch,
            train_mae: train_loss,
            val_mae,
        });
        let improved = match &best {
            None => true,
            Some((best_val, _)) => val_mae < *best_val,
        };
        if improved {
            best = Some((val_mae, model.clone()));
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, history))
}

/// Forecast from the latest window: network forward, then the plain SIR
/// rollout from the last observed state. Returns the predicted series
/// (dates continue the dataset) and the rate track used.
pub fn forecast(
    model: &ModelState,
    dataset: &EpiSeries,
    regions: &RegionSet,
    horizon: usize,
) -> Result<(EpiSeries, ParamTrack)> {
    if !(1..=28).contains(&horizon) {
        return Err(Error::validation(format!(
            "horizon must lie in 1..=28, got {}",
            horizon
        )));
    }
    let t_in = model.config.window;
    if dataset.n_days() < t_in {
        return Err(Error::validation(format!(
            "dataset has {} days, model window needs {}",
            dataset.n_days(),
            t_in
        )));
    }
    let window = dataset.slice_days(dataset.n_days() - t_in, t_in)?;
    let track = forward_track(model, &window, regions, horizon)?;
    let initial = MetapopState::from_series(&window, window.n_days() - 1)?;
    let interaction = model.interaction_matrix(regions)?;
    let predicted = metapop_simulate(&initial, &track, &interaction, horizon)?;
    let last_date = *window.dates().last().unwrap();
    Ok((predicted.with_first_day(last_date + 1), track))
}

/// Loss history CSV: `epoch, train_mae, val_mae`.
pub fn write_loss_history(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_mae,val_mae\n");
    for record in history {
        out.push_str(&format!(
            "{},{},{}\n",
            record.epoch, record.train_mae, record.val_mae
        ));
    }
    crate::domain::write_text(path, &out)
}
