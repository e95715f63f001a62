use serde::{Deserialize, Serialize};

use crate::encoder::ModelParams;
use crate::error::{Error, Result};

/// Optimization and run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub cl_temperature: f64,
    /// Train on every prefix of each training sequence instead of only the
    /// last position.
    pub all_prefixes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 50,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            cl_temperature: 1.0,
            all_prefixes: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size {} must be >= 2", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("adam betas ({}, {}) must lie in [0, 1)", self.beta1, self.beta2));
        }
        if !(self.adam_eps > 0.0) {
            return bad(format!("adam_eps {} must be > 0", self.adam_eps));
        }
        if !(self.cl_temperature > 0.0 && self.cl_temperature.is_finite()) {
            return bad(format!("cl_temperature {} must be > 0", self.cl_temperature));
        }
        Ok(())
    }
}

/// Adam with bias correction, no weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let grads = grad.tensors();
        for (((p, m), v), (_, _, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ModelConfig;
    use crate::rng::stream;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let cfg = ModelConfig { num_items: 4, max_len: 4, dim: 4, num_layers: 1, ..Default::default() };
        let mut p = ModelParams::init(&cfg, &mut stream(1, &[])).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut adam = Adam::new(&p, &TrainConfig::default());
        for _ in 0..3 {
            adam.step(&mut p, &g);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = ModelConfig { num_items: 4, max_len: 4, dim: 4, num_layers: 1, ..Default::default() };
        let mut p = ModelParams::init(&cfg, &mut stream(1, &[])).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.pos_table[(0, 0)] = 3.0;
        let mut adam = Adam::new(&p, &TrainConfig::default());
        adam.step(&mut p, &g);
        assert!((before.pos_table[(0, 0)] - p.pos_table[(0, 0)] - 1e-3).abs() < 1e-9);
    }
}
