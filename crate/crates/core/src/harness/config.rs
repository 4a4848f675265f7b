use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use smis_tensor::optim::AdamConfig;

use crate::error::{Result, SmisError};
use crate::metrics::{ExtractorConfig, MetricsConfig};
use crate::networks::ModelConfig;
use crate::objectives::LossWeights;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr_g: 1e-4,
            lr_d: 4e-4,
            beta1: 0.0,
            beta2: 0.9,
            eps: default_eps(),
        }
    }
}

impl OptimConfig {
    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rates are constant before this epoch and decay linearly to 0 at `epochs`.
    pub decay_start: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    /// Write `epoch_NNNN.ckpt` every this many epochs (0 = only the final one).
    #[serde(default = "one")]
    pub checkpoint_every: usize,
    /// Write a sample grid every this many steps (0 = never).
    #[serde(default)]
    pub sample_every: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train_manifest: PathBuf,
    /// Held-out scenes for evaluation; the training set is used when absent.
    #[serde(default)]
    pub eval_manifest: Option<PathBuf>,
    /// Use only the first `limit` training scenes.
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub optim: OptimConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub extractor: ExtractorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    pub output_dir: PathBuf,
}

/// Parse `key=value` where `value` is TOML (bare words are taken as strings).
fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| SmisError::config(format!("override `{item}` is not key=value")))?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.trim().split('.').map(str::to_string).collect(), value))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| SmisError::config("empty override key"))?;
    let mut table = root;
    for p in parents {
        table = table
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| SmisError::config(format!("override path {} crosses a non-table", path.join("."))))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| SmisError::config(e.to_string()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| SmisError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SmisError::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SmisError::config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(format!("{:x}", Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.metrics.validate()?;
        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 {
            return Err(SmisError::config("epochs and batch_size must be positive"));
        }
        if t.decay_start >= t.epochs {
            return Err(SmisError::config(format!(
                "decay_start {} must be below epochs {}",
                t.decay_start, t.epochs
            )));
        }
        let o = &self.optim;
        if !(o.lr_g >= 0.0 && o.lr_d >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2)) {
            return Err(SmisError::config("optimizer settings out of range"));
        }
        Ok(())
    }

    /// Check that every input path exists.
    pub fn check_paths(&self) -> Result<()> {
        let mut paths = vec![&self.data.train_manifest];
        paths.extend(self.data.eval_manifest.as_ref());
        for p in paths {
            if !p.is_file() {
                return Err(SmisError::data(p, "manifest not found"));
            }
        }
        Ok(())
    }
}

/// Learning-rate multiplier for `epoch`: 1 before `decay_start`, then linear to 0 at `epochs`.
pub fn lr_factor(epoch: usize, decay_start: usize, epochs: usize) -> f64 {
    if epoch < decay_start {
        1.0
    } else {
        epochs.saturating_sub(epoch) as f64 / (epochs - decay_start) as f64
    }
}
