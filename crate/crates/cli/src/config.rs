//! Flat key/value run configuration.
//!
//! The file is TOML with top-level keys only. Command-line overrides
//! (`--seed`, `--out`, `--dataset`, `--set key=value`) are merged into the
//! parsed table before it is validated, so a typo is rejected whether it
//! comes from the file or the command line.

use std::fs;
use std::path::{Path, PathBuf};

use fearec_core::encoder::ModelConfig;
use fearec_core::training::{LossWeights, TrainConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::failure::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Processed dataset written by `fearec prepare`.
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,

    pub max_len: usize,
    pub dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub topk_scale: f64,
    pub dropout: f64,
    pub causal_mask: bool,

    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub cl_temperature: f64,
    pub all_prefixes: bool,

    pub lambda1: f64,
    pub lambda2: f64,

    /// Drop the user's own history from the ranked candidates.
    pub exclude_seen: bool,
    /// Stop after this many epochs without a better validation NDCG@10;
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let w = LossWeights::default();
        Self {
            dataset: None,
            out: None,
            seed: None,
            max_len: m.max_len,
            dim: m.dim,
            num_layers: m.num_layers,
            num_heads: m.num_heads,
            alpha: m.alpha,
            gamma: m.gamma,
            topk_scale: m.topk_scale,
            dropout: m.dropout,
            causal_mask: m.causal_mask,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            cl_temperature: t.cl_temperature,
            all_prefixes: t.all_prefixes,
            lambda1: w.lambda1,
            lambda2: w.lambda2,
            exclude_seen: true,
            patience: 0,
        }
    }
}

/// Parses `key=value`; the value is read as a TOML literal when possible
/// (`3`, `0.5`, `true`, `"x"`) and as a bare string otherwise.
fn parse_override(raw: &str) -> Result<(String, Value), Failure> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("--set expects key=value, got {raw:?}")))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((key, parsed))
}

#[derive(Debug, Default)]
pub struct Overrides {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub sets: Vec<String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, Failure> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Failure::io(format!("reading {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| Failure::config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for raw in &overrides.sets {
            let (k, v) = parse_override(raw)?;
            table.insert(k, v);
        }
        let path_value = |p: &Path| Value::String(p.display().to_string());
        if let Some(d) = &overrides.dataset {
            table.insert("dataset".into(), path_value(d));
        }
        if let Some(o) = &overrides.out {
            table.insert("out".into(), path_value(o));
        }
        if let Some(s) = overrides.seed {
            let s = i64::try_from(s).map_err(|_| Failure::config("seed must fit in a signed 64-bit integer"))?;
            table.insert("seed".into(), Value::Integer(s));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Failure::config(e.to_string()))?;
        cfg.train_config().validate().map_err(Failure::from)?;
        cfg.weights().validate().map_err(Failure::from)?;
        Ok(cfg)
    }

    pub fn model_config(&self, num_items: usize) -> ModelConfig {
        ModelConfig {
            num_items,
            max_len: self.max_len,
            dim: self.dim,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            alpha: self.alpha,
            gamma: self.gamma,
            topk_scale: self.topk_scale,
            dropout: self.dropout,
            causal_mask: self.causal_mask,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            seed: self.seed.unwrap_or_default(),
            cl_temperature: self.cl_temperature,
            all_prefixes: self.all_prefixes,
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }
}
