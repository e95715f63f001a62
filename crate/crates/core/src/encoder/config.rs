use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ramp::RampSchedule;

/// Architecture hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Catalog size, excluding the padding id 0.
    pub num_items: usize,
    pub max_len: usize,
    pub dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// Fraction of the half-spectrum each layer keeps.
    pub alpha: f64,
    /// Weight of time-domain attention in the hybrid mix.
    pub gamma: f64,
    /// `m` in `k = floor(m * ln N)`.
    pub topk_scale: f64,
    pub dropout: f64,
    pub causal_mask: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_items: 0,
            max_len: 50,
            dim: 64,
            num_layers: 2,
            num_heads: 2,
            alpha: 0.8,
            gamma: 0.5,
            topk_scale: 1.0,
            dropout: 0.5,
            causal_mask: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_items == 0 {
            return bad("num_items must be >= 1".into());
        }
        if self.max_len < 2 {
            return bad(format!("max_len {} must be >= 2", self.max_len));
        }
        if self.dim == 0 || self.num_heads == 0 || self.dim % self.num_heads != 0 {
            return bad(format!(
                "dim {} must be a positive multiple of num_heads {}",
                self.dim, self.num_heads
            ));
        }
        if self.num_layers == 0 {
            return bad("num_layers must be >= 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} not in (0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0, 1]", self.gamma));
        }
        if !(self.topk_scale > 0.0 && self.topk_scale.is_finite()) {
            return bad(format!("topk_scale {} must be > 0", self.topk_scale));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.num_heads
    }

    /// Number of delays aggregated per head, `floor(m * ln N)` clamped to `1..=N`.
    pub fn top_k(&self) -> usize {
        let k = (self.topk_scale * (self.max_len as f64).ln()).floor();
        (k.max(1.0) as usize).min(self.max_len)
    }

    pub fn ramp(&self) -> Result<RampSchedule> {
        RampSchedule::for_sequence(self.num_layers, self.max_len, self.alpha)
    }
}
