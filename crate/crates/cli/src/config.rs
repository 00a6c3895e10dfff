//! Simulation config files: TOML with a `[simulation]` and a `[model]`
//! section. Model fields left out fall back to the tuned values for the
//! algorithm and dataset.
//!
//! ```toml
//! [simulation]
//! iterations = 40
//! top_n = 10
//! seed = 7
//! metrics = ["global_gini", "group_cosine"]
//! groups = ["M", "F"]
//!
//! [model]
//! algorithm = "svd"
//! epochs = 50
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use popbias_core::recsys::{Algorithm, DatasetKind, Hyperparams, Similarity};
use popbias_core::simulator::{MetricKind, SimulationConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub simulation: SimulationSection,
    pub model: ModelSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub dataset: Option<String>,
    pub iterations: Option<usize>,
    pub top_n: Option<usize>,
    pub seed: Option<u64>,
    pub test_fraction: Option<f64>,
    pub metrics: Option<BTreeSet<MetricKind>>,
    pub groups: Option<(String, String)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub algorithm: Algorithm,
    pub epochs: Option<usize>,
    pub factors: Option<usize>,
    pub learning_rate: Option<f64>,
    pub regularization: Option<f64>,
    pub k_neighbors: Option<usize>,
    pub similarity: Option<Similarity>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Resolves defaults. `dataset` is the id recorded at ingest, used when
    /// the file names none; `algorithm` overrides the file's choice.
    pub fn resolve(&self, dataset: &str, algorithm: Option<Algorithm>) -> SimulationConfig {
        let sim = &self.simulation;
        let m = &self.model;
        let dataset = sim.dataset.clone().unwrap_or_else(|| dataset.to_owned());
        let kind = dataset.parse().unwrap_or(DatasetKind::Movielens);
        let algorithm = algorithm.unwrap_or(m.algorithm);
        let tuned = Hyperparams::tuned(algorithm, kind);
        let params = Hyperparams {
            algorithm,
            epochs: m.epochs.unwrap_or(tuned.epochs),
            factors: m.factors.unwrap_or(tuned.factors),
            learning_rate: m.learning_rate.unwrap_or(tuned.learning_rate),
            regularization: m.regularization.unwrap_or(tuned.regularization),
            k_neighbors: m.k_neighbors.unwrap_or(tuned.k_neighbors),
            similarity: m.similarity.unwrap_or(tuned.similarity),
            train_seed: 0,
        };
        let mut config = SimulationConfig::new(params);
        config.dataset = dataset;
        config.iterations = sim.iterations.unwrap_or(config.iterations);
        config.top_n = sim.top_n.unwrap_or(config.top_n);
        config.seed = sim.seed.unwrap_or(config.seed);
        config.test_fraction = sim.test_fraction.unwrap_or(config.test_fraction);
        if let Some(metrics) = &sim.metrics {
            config.metrics = metrics.clone();
        }
        if let Some(groups) = &sim.groups {
            config.groups = groups.clone();
        }
        config
    }
}

/// SHA-256 of the resolved config's canonical JSON. Fields serialise in
/// declaration order and sets in sorted order, so equal configs hash equally
/// on every machine.
pub fn config_hash(config: &SimulationConfig) -> String {
    let json = serde_json::to_string(config).expect("config serialises");
    hex::encode(Sha256::digest(json.as_bytes()))
}
