//! Run configuration: one TOML file describing paths, ingestion, mobility,
//! training and evaluation. Flags override file values; the normalized
//! config echoes into every JSON artifact for provenance.

use std::path::{Path, PathBuf};

use epiforecast::estimator::TrainConfig;
use epiforecast::ingest::IngestConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsSection {
    pub cases: PathBuf,
    pub populations: PathBuf,
    pub distances: PathBuf,
    pub workdir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            cases: PathBuf::from("cases.csv"),
            populations: PathBuf::from("populations.csv"),
            distances: PathBuf::from("distances.csv"),
            workdir: PathBuf::from("out"),
        }
    }
}

/// Gravity/flight mobility parameters; the regularizer epsilon is always
/// derived from alpha and the total population, never configured.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MobilitySection {
    pub alpha: f64,
    pub d: f64,
    pub flight_coefficient: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        MobilitySection {
            alpha: 1.12e-6,
            d: 1.73,
            flight_coefficient: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    pub horizons: Vec<usize>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { horizons: vec![1, 7] }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: PathsSection,
    pub ingest: IngestConfig,
    pub mobility: MobilitySection,
    pub train: TrainConfig,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    /// Parses the file as-is; relative paths stay relative so the echoed
    /// config is independent of where the run happens (they resolve against
    /// the config file's directory at use time).
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }
}
