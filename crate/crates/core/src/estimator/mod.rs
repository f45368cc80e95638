//! Spatio-temporal graph network that estimates per-region (beta, gamma)
//! sequences: stacked gated-temporal-convolution + graph-convolution layers,
//! two fully connected heads (ReLU, then Sigmoid), and learnable mobility
//! initialized from the static gravity/flight estimate. Trained end-to-end
//! through the differentiable SIR rollout against observed daily infections.

mod graph;
mod ops;
mod train;

pub use graph::{backward, forward, window_features, BackwardResult};
pub use ops::{gated_temporal_conv, graph_conv, loss_mae, row_normalized, TemporalFilter};
pub use train::{chronological_split, forecast, train, write_loss_history, LossRecord};

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{pair_count, packed_upper_index};
use crate::domain::RegionSet;
use crate::error::{Error, Result};
use crate::mobility::{mobility_matrix, InteractionMatrix, MobilityConfig};

/// Compartment fractions plus normalized daily cases per region.
pub const INPUT_CHANNELS: usize = 4;

/// Training and architecture configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Input window length T_in in days.
    pub window: usize,
    /// Forecast horizon in days, 1..=28.
    pub horizon: usize,
    /// Channel width of the spatio-temporal layers.
    pub hidden: usize,
    pub st_layers: usize,
    pub kernel_width: usize,
    /// Scale of the sigmoid beta head; beta lies in (0, beta_max).
    pub beta_max: f64,
    pub adam_b1: f64,
    pub adam_b2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2.5e-5,
            epochs: 319,
            window: 28,
            horizon: 7,
            hidden: 32,
            st_layers: 2,
            kernel_width: 3,
            beta_max: 2.0,
            adam_b1: 0.9,
            adam_b2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be positive"));
        }
        if !(1..=28).contains(&self.horizon) {
            return Err(Error::validation(format!(
                "horizon must lie in 1..=28, got {}",
                self.horizon
            )));
        }
        if self.hidden == 0 || self.st_layers == 0 || self.kernel_width == 0 {
            return Err(Error::validation(
                "hidden width, layer count and kernel width must be positive",
            ));
        }
        if self.window <= self.st_layers * (self.kernel_width - 1) {
            return Err(Error::validation(format!(
                "window {} too short for {} layers of kernel width {}",
                self.window, self.st_layers, self.kernel_width
            )));
        }
        if !(self.beta_max > 0.0 && self.beta_max.is_finite()) {
            return Err(Error::validation("beta_max must be positive"));
        }
        if !(0.0 < self.adam_b1 && self.adam_b1 < 1.0)
            || !(0.0 < self.adam_b2 && self.adam_b2 < 1.0)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::validation("adam hyperparameters out of range"));
        }
        Ok(())
    }
}

/// One spatio-temporal layer: two temporal filter banks (gate and value
/// branches) and the channel map of the graph convolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StLayer {
    pub u_taps: Vec<Array2<f64>>,
    pub u_bias: Array1<f64>,
    pub v_taps: Vec<Array2<f64>>,
    pub v_bias: Array1<f64>,
    pub graph_w: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

/// All trainable parameters plus optimizer state and the RNG seed.
///
/// `adaptive_log_mobility` packs one log-mobility value per unordered region
/// pair (upper triangle with diagonal); the exp parameterization keeps the
/// learned mobility positive through any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: TrainConfig,
    pub n_regions: usize,
    pub input_channels: usize,
    pub seed: u64,
    pub layers: Vec<StLayer>,
    pub head1_w: Array2<f64>,
    pub head1_b: Array1<f64>,
    pub head2_w: Array2<f64>,
    pub head2_b: Array1<f64>,
    pub adaptive_log_mobility: Array1<f64>,
    pub adam: AdamState,
}

impl ModelState {
    /// Weights drawn uniformly in +-sqrt(6 / (fan_in + fan_out)) from the
    /// seeded generator; biases start at zero; mobility starts at the log of
    /// the static gravity/flight matrix.
    pub fn init(
        regions: &RegionSet,
        mobility: &MobilityConfig,
        config: &TrainConfig,
    ) -> Result<ModelState> {
        config.validate()?;
        let n = regions.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::with_capacity(config.st_layers);
        for l in 0..config.st_layers {
            let c_in = if l == 0 { INPUT_CHANNELS } else { config.hidden };
            let fan = (config.kernel_width * c_in + config.hidden) as f64;
            let bound = (6.0 / fan).sqrt();
            let taps = |rng: &mut ChaCha8Rng| {
                (0..config.kernel_width)
                    .map(|_| {
                        Array2::from_shape_fn((c_in, config.hidden), |_| {
                            bound * (2.0 * rng.gen::<f64>() - 1.0)
                        })
                    })
                    .collect::<Vec<_>>()
            };
            let u_taps = taps(&mut rng);
            let v_taps = taps(&mut rng);
            let gw_bound = (6.0 / (2 * config.hidden) as f64).sqrt();
            let graph_w = Array2::from_shape_fn((config.hidden, config.hidden), |_| {
                gw_bound * (2.0 * rng.gen::<f64>() - 1.0)
            });
            layers.push(StLayer {
                u_taps,
                u_bias: Array1::zeros(config.hidden),
                v_taps,
                v_bias: Array1::zeros(config.hidden),
                graph_w,
            });
        }
        let h1_bound = (6.0 / (2 * config.hidden) as f64).sqrt();
        let head1_w = Array2::from_shape_fn((config.hidden, config.hidden), |_| {
            h1_bound * (2.0 * rng.gen::<f64>() - 1.0)
        });
        let h2_bound = (6.0 / (config.hidden + 2) as f64).sqrt();
        let head2_w = Array2::from_shape_fn((config.hidden, 2), |_| {
            h2_bound * (2.0 * rng.gen::<f64>() - 1.0)
        });

        let h = mobility_matrix(regions, mobility);
        let mut packed = Array1::zeros(pair_count(n));
        for m in 0..n {
            for k in m..n {
                packed[packed_upper_index(m, k, n)] = h[(m, k)].ln();
            }
        }

        let mut model = ModelState {
            config: config.clone(),
            n_regions: n,
            input_channels: INPUT_CHANNELS,
            seed: config.seed,
            layers,
            head1_w,
            head1_b: Array1::zeros(config.hidden),
            head2_w,
            head2_b: Array1::zeros(2),
            adaptive_log_mobility: packed,
            adam: AdamState {
                m: Vec::new(),
                v: Vec::new(),
                step: 0,
            },
        };
        let count = model.param_count();
        model.adam.m = vec![0.0; count];
        model.adam.v = vec![0.0; count];
        Ok(model)
    }

    /// Learned mobility expanded to a symmetric matrix.
    pub fn learned_mobility(&self) -> Array2<f64> {
        let n = self.n_regions;
        let mut h = Array2::zeros((n, n));
        for m in 0..n {
            for k in m..n {
                let v = self.adaptive_log_mobility[packed_upper_index(m, k, n)].exp();
                h[(m, k)] = v;
                h[(k, m)] = v;
            }
        }
        h
    }

    /// Interaction coefficients built from the learned mobility; the raw
    /// (unnormalized) coefficients drive the SIR rollout.
    pub fn interaction_matrix(&self, regions: &RegionSet) -> Result<InteractionMatrix> {
        InteractionMatrix::from_mobility(&self.learned_mobility(), regions)
    }

    fn param_arrays(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for tap in &layer.u_taps {
                out.push(tap.as_slice().expect("standard layout"));
            }
            out.push(layer.u_bias.as_slice().expect("standard layout"));
            for tap in &layer.v_taps {
                out.push(tap.as_slice().expect("standard layout"));
            }
            out.push(layer.v_bias.as_slice().expect("standard layout"));
            out.push(layer.graph_w.as_slice().expect("standard layout"));
        }
        out.push(self.head1_w.as_slice().expect("standard layout"));
        out.push(self.head1_b.as_slice().expect("standard layout"));
        out.push(self.head2_w.as_slice().expect("standard layout"));
        out.push(self.head2_b.as_slice().expect("standard layout"));
        out.push(
            self.adaptive_log_mobility
                .as_slice()
                .expect("standard layout"),
        );
        out
    }

    fn param_arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let ModelState {
            layers,
            head1_w,
            head1_b,
            head2_w,
            head2_b,
            adaptive_log_mobility,
            ..
        } = self;
        let mut out = Vec::new();
        for layer in layers.iter_mut() {
            for tap in &mut layer.u_taps {
                out.push(tap.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.u_bias.as_slice_mut().expect("standard layout"));
            for tap in &mut layer.v_taps {
                out.push(tap.as_slice_mut().expect("standard layout"));
            }
            out.push(layer.v_bias.as_slice_mut().expect("standard layout"));
            out.push(layer.graph_w.as_slice_mut().expect("standard layout"));
        }
        out.push(head1_w.as_slice_mut().expect("standard layout"));
        out.push(head1_b.as_slice_mut().expect("standard layout"));
        out.push(head2_w.as_slice_mut().expect("standard layout"));
        out.push(head2_b.as_slice_mut().expect("standard layout"));
        out.push(adaptive_log_mobility.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_arrays().iter().map(|s| s.len()).sum()
    }

    /// All parameters flattened in the canonical (declared) order.
    pub fn param_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for slice in self.param_arrays() {
            out.extend_from_slice(slice);
        }
        out
    }

    pub fn set_param_vector(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::validation(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut offset = 0;
        for slice in self.param_arrays_mut() {
            slice.copy_from_slice(&values[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }

    /// One Adam update with bias correction over the flattened parameters.
    pub fn adam_step(&mut self, gradients: &[f64]) -> Result<()> {
        if gradients.len() != self.param_count() {
            return Err(Error::validation(format!(
                "gradient length {} does not match {} parameters",
                gradients.len(),
                self.param_count()
            )));
        }
        let lr = self.config.learning_rate;
        let b1 = self.config.adam_b1;
        let b2 = self.config.adam_b2;
        let eps = self.config.adam_eps;
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let mut offset = 0;
        let adam_m = std::mem::take(&mut self.adam.m);
        let adam_v = std::mem::take(&mut self.adam.v);
        let mut adam_m = adam_m;
        let mut adam_v = adam_v;
        for slice in self.param_arrays_mut() {
            for value in slice.iter_mut() {
                let g = gradients[offset];
                let m = b1 * adam_m[offset] + (1.0 - b1) * g;
                let v = b2 * adam_v[offset] + (1.0 - b2) * g * g;
                adam_m[offset] = m;
                adam_v[offset] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *value -= lr * m_hat / (v_hat.sqrt() + eps);
                offset += 1;
            }
        }
        self.adam.m = adam_m;
        self.adam.v = adam_v;
        Ok(())
    }
}

const CHECKPOINT_FORMAT: &str = "epiforecast-checkpoint/v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    model: ModelState,
}

/// Self-describing JSON checkpoint: format tag, config echo, seed, all
/// parameter arrays in declared order, optimizer state.
pub fn save_checkpoint(model: &ModelState, path: &Path) -> Result<()> {
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&checkpoint)
        .map_err(|e| Error::validation(format!("checkpoint serialization failed: {e}")))?;
    crate::domain::write_text(path, &json)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {}", path.display(), e)))?;
    if checkpoint.format != CHECKPOINT_FORMAT {
        return Err(Error::Schema(format!(
            "{}: unsupported checkpoint format '{}'",
            path.display(),
            checkpoint.format
        )));
    }
    Ok(checkpoint.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small_regions() -> RegionSet {
        RegionSet::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![1000.0, 2000.0, 1500.0],
            {
                let mut d = Array2::zeros((3, 3));
                d[(0, 1)] = 30.0;
                d[(1, 0)] = 30.0;
                d[(0, 2)] = 40.0;
                d[(2, 0)] = 40.0;
                d[(1, 2)] = 50.0;
                d[(2, 1)] = 50.0;
                d
            },
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            window: 8,
            horizon: 3,
            hidden: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_config_matches_published_hyperparameters() {
        let config = TrainConfig::default();
        assert_eq!(config.learning_rate, 2.5e-5);
        assert_eq!(config.epochs, 319);
        assert_eq!(config.adam_b1, 0.9);
        assert_eq!(config.adam_b2, 0.999);
    }

    #[test]
    fn param_vector_round_trips() {
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.0, regions.total_population()).unwrap();
        let mut model = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        let original = model.param_vector();
        assert_eq!(original.len(), model.param_count());
        let mut shifted = original.clone();
        for v in &mut shifted {
            *v += 0.25;
        }
        model.set_param_vector(&shifted).unwrap();
        assert_eq!(model.param_vector(), shifted);
        model.set_param_vector(&original).unwrap();
        assert_eq!(model.param_vector(), original);
    }

    #[test]
    fn param_count_is_structural() {
        // depends only on region count, widths and layer count, not on data
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.0, regions.total_population()).unwrap();
        let config = small_config();
        let model = ModelState::init(&regions, &mobility, &config).unwrap();
        let k = config.kernel_width;
        let h = config.hidden;
        let c0 = INPUT_CHANNELS;
        let expected = (k * c0 * h + h + k * c0 * h + h + h * h) // layer 1
            + (k * h * h + h + k * h * h + h + h * h) // layer 2
            + (h * h + h) // head 1
            + (h * 2 + 2) // head 2
            + pair_count(3);
        assert_eq!(model.param_count(), expected);
    }

    #[test]
    fn learned_mobility_initializes_to_static_estimate() {
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.1, regions.total_population()).unwrap();
        let model = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        let h_static = mobility_matrix(&regions, &mobility);
        let h_learned = model.learned_mobility();
        for m in 0..3 {
            for n in 0..3 {
                approx::assert_relative_eq!(
                    h_learned[(m, n)],
                    h_static[(m, n)],
                    max_relative = 1e-12
                );
            }
        }
        assert!(h_learned.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn mobility_stays_positive_after_updates() {
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.0, regions.total_population()).unwrap();
        let mut model = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        // large hostile gradient pushes log values far negative
        let grads = vec![1e3; model.param_count()];
        for _ in 0..50 {
            model.adam_step(&grads).unwrap();
        }
        assert!(model.learned_mobility().iter().all(|v| *v > 0.0));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.0, regions.total_population()).unwrap();
        let a = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        let b = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        assert_eq!(a.param_vector(), b.param_vector());
        let other = ModelState::init(
            &regions,
            &mobility,
            &TrainConfig {
                seed: 7,
                ..small_config()
            },
        )
        .unwrap();
        assert_ne!(a.param_vector(), other.param_vector());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.0, regions.total_population()).unwrap();
        let model = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, model);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("epiforecast-checkpoint/v1"));
    }

    #[test]
    fn checkpoint_rejects_unknown_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"format":"other/v9","model":{}}"#).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = small_config();
        config.horizon = 0;
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.horizon = 29;
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.window = 4; // too short for 2 layers of width-3 kernels
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.learning_rate = 0.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn adam_moves_toward_descent_direction() {
        let regions = small_regions();
        let mobility = MobilityConfig::new(1e-5, 1.73, 0.0, regions.total_population()).unwrap();
        let mut model = ModelState::init(&regions, &mobility, &small_config()).unwrap();
        let before = model.param_vector();
        let grads = vec![1.0; model.param_count()];
        model.adam_step(&grads).unwrap();
        let after = model.param_vector();
        for (b, a) in before.iter().zip(after.iter()) {
            assert!(a < b, "positive gradient must decrease the parameter");
        }
        let moved = array![before[0] - after[0]];
        // first bias-corrected step magnitude is ~lr
        approx::assert_relative_eq!(
            moved[0],
            model.config.learning_rate,
            max_relative = 1e-6
        );
    }
}
