//! Epidemic forecasting over coupled regional populations.
//!
//! The pipeline ingests cumulative case counts, builds a gravity/flight
//! mobility graph, trains a spatio-temporal graph network that emits
//! per-region infection and removal rates through a differentiable SIR
//! rollout, forecasts daily infections at short horizons, and tracks the
//! reproduction number as the spectral radius of the scaled interaction
//! matrix.

pub mod autodiff;
pub mod domain;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod ingest;
pub mod mobility;
pub mod reproduction;
pub mod sir;

pub use error::{Error, Result};

// re-exported so downstream binaries share one ndarray version
pub use ndarray;
