//! Flat `key = value` config files. Flags given on the command line win over
//! keys read here, which win over the built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thermovis::eval::ReportFormat;
use thermovis::{FusionWeights, Hyperparameters, ImageDims};

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dims: Option<String>,
    pub visual_weight: Option<f64>,
    pub thermal_weight: Option<f64>,
    pub resplit_seed: Option<u64>,
    pub k: Option<usize>,
    pub hidden: Option<usize>,
    pub lr: Option<f64>,
    pub momentum: Option<f64>,
    pub epochs: Option<usize>,
    pub target_loss: Option<f64>,
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub classes: Option<usize>,
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub separation: Option<f64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Data(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn dims(&self) -> Result<Option<ImageDims>, Failure> {
        self.dims
            .as_deref()
            .map(|s| {
                s.parse()
                    .map_err(|e| Failure::Usage(format!("config key dims: {e}")))
            })
            .transpose()
    }

    pub fn format(&self) -> Result<Option<ReportFormat>, Failure> {
        self.format
            .as_deref()
            .map(|s| {
                s.parse()
                    .map_err(|e| Failure::Usage(format!("config key format: {e}")))
            })
            .transpose()
    }
}

/// A single given weight implies its complement.
pub fn resolve_weights(
    visual: Option<f64>,
    thermal: Option<f64>,
) -> Result<FusionWeights, Failure> {
    let weights = match (visual, thermal) {
        (None, None) => return Ok(FusionWeights::default()),
        (Some(a), Some(b)) => FusionWeights::new(a, b),
        (Some(a), None) => FusionWeights::new(a, 1.0 - a),
        (None, Some(b)) => FusionWeights::new(1.0 - b, b),
    };
    weights.map_err(|e| Failure::Usage(e.to_string()))
}

pub fn resolve_hyper(
    lr: Option<f64>,
    momentum: Option<f64>,
    epochs: Option<usize>,
    target_loss: Option<f64>,
    seed: Option<u64>,
) -> Result<Hyperparameters, Failure> {
    let d = Hyperparameters::default();
    let hyper = Hyperparameters {
        learning_rate: lr.unwrap_or(d.learning_rate),
        momentum: momentum.unwrap_or(d.momentum),
        max_epochs: epochs.unwrap_or(d.max_epochs),
        target_loss: target_loss.unwrap_or(d.target_loss),
        seed: seed.unwrap_or(d.seed),
    };
    hyper
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(hyper)
}
