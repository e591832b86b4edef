//! File-backed run configuration: a flat JSON mirror of the training
//! hyperparameters plus input/output paths, with `--set key=value` overrides.
//! Unknown keys are rejected up front.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hybowave::encoder::EncoderKind;
use hybowave::manifold::Activation;
use hybowave::trainer::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // paths (flags may also supply these)
    pub edges: Option<String>,
    pub out_dir: Option<String>,
    pub checkpoint: Option<String>,
    // hyperparameters, mirroring the trainer configuration
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub curvature: f64,
    pub activation: Activation,
    pub dropout: f64,
    pub temperature: f64,
    pub contrastive_weight: f64,
    pub scales: Vec<usize>,
    pub use_wavelet: bool,
    pub use_contrastive: bool,
    pub encoder: EncoderKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            edges: None,
            out_dir: None,
            checkpoint: None,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            input_dim: t.input_dim,
            hidden_dim: t.hidden_dim,
            num_layers: t.num_layers,
            curvature: t.curvature,
            activation: t.activation,
            dropout: t.dropout,
            temperature: t.temperature,
            contrastive_weight: t.contrastive_weight,
            scales: t.scales,
            use_wavelet: t.use_wavelet,
            use_contrastive: t.use_contrastive,
            encoder: t.encoder,
        }
    }
}

impl RunConfig {
    /// Loads the config file (or defaults) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if !overrides.is_empty() {
            cfg = cfg.with_overrides(overrides)?;
        }
        Ok(cfg)
    }

    fn with_overrides(&self, overrides: &[String]) -> Result<RunConfig> {
        let mut value = serde_json::to_value(self)?;
        let map = value
            .as_object_mut()
            .expect("RunConfig serializes to an object");
        for item in overrides {
            let Some((key, raw)) = item.split_once('=') else {
                bail!("override {item:?} is not of the form key=value");
            };
            // JSON literal when it parses (numbers, booleans, arrays),
            // otherwise a bare string like an encoder name
            let parsed = serde_json::from_str::<serde_json::Value>(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
            map.insert(key.to_string(), parsed);
        }
        serde_json::from_value(value).context("applying --set overrides")
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
            curvature: self.curvature,
            activation: self.activation,
            dropout: self.dropout,
            temperature: self.temperature,
            contrastive_weight: self.contrastive_weight,
            scales: self.scales.clone(),
            use_wavelet: self.use_wavelet,
            use_contrastive: self.use_contrastive,
            encoder: self.encoder,
        }
    }
}
