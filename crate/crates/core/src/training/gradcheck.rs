//! Central finite-difference check of the hand-written backward passes.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::loss::LossWeights;
use super::step::{batch_gradient, Objective, PassControl};
use crate::data::{pad_truncate, SequenceBatch};
use crate::encoder::{Encoder, ModelConfig, ModelParams};
use crate::error::Result;
use crate::rng::stream;

pub const FD_EPSILON: f64 = 1e-4;
const CHECK_BATCH: usize = 3;
const WEIGHT_STD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GradCheckLoss {
    Rec,
    Freg,
    Total,
}

impl GradCheckLoss {
    fn objective(self) -> Objective {
        match self {
            GradCheckLoss::Rec => Objective { rec: 1.0, cl: 0.0, freg: 0.0 },
            GradCheckLoss::Freg => Objective { rec: 0.0, cl: 0.0, freg: 1.0 },
            GradCheckLoss::Total => LossWeights::default().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub loss: GradCheckLoss,
    /// `max |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)` over every scalar.
    pub max_rel_error: f64,
    /// Tensor name and flat index where the maximum occurs.
    pub worst: String,
    pub checked: usize,
}

/// Parameters with O(1) weights and perturbed normalization gains so that
/// every nonlinearity is exercised away from its degenerate point (unit
/// gains and zero biases make every hidden row sum to zero, which puts the
/// frequency regularizer on the kink of `|.|` at DC).
fn check_params(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut rng = stream(seed, &[0xC4EC]);
    let mut params = ModelParams::init(cfg, &mut rng)?;
    let normal = Normal::new(0.0, WEIGHT_STD).expect("valid std");
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        let gain = name.ends_with(".gain");
        for v in t.iter_mut() {
            *v = normal.sample(&mut rng) + if gain { 1.0 } else { 0.0 };
        }
    }
    params.zero_padding_row();
    Ok(params)
}

fn check_batch(cfg: &ModelConfig, seed: u64) -> SequenceBatch {
    let mut rng = stream(seed, &[0xBA7]);
    let n = cfg.max_len;
    let seq = |rng: &mut crate::rng::Rng| -> Vec<usize> {
        let len = rng.random_range(2..=n);
        let items: Vec<usize> = (0..len).map(|_| rng.random_range(1..=cfg.num_items)).collect();
        pad_truncate(&items, n)
    };
    let ids: Vec<Vec<usize>> = (0..CHECK_BATCH).map(|_| seq(&mut rng)).collect();
    let positive_ids = (0..CHECK_BATCH).map(|_| seq(&mut rng)).collect();
    let targets = (0..CHECK_BATCH).map(|_| rng.random_range(1..=cfg.num_items)).collect();
    SequenceBatch {
        ids,
        targets,
        positive_ids,
        examples: (0..CHECK_BATCH).collect(),
    }
}

/// Compares the analytic gradient of `loss` with central differences
/// (step [`FD_EPSILON`]) for every parameter scalar of a model built from
/// `cfg`. Dropout is disabled and top-k lag sets are frozen at their values
/// for the unperturbed parameters.
pub fn grad_check(cfg: &ModelConfig, loss: GradCheckLoss, seed: u64) -> Result<GradCheckReport> {
    let cfg = ModelConfig {
        dropout: 0.0,
        ..cfg.clone()
    };
    let encoder = Encoder::new(cfg.clone())?;
    let mut params = check_params(&cfg, seed)?;
    let batch = check_batch(&cfg, seed);
    let objective = loss.objective();
    let temperature = 1.0;

    let first = batch_gradient(&encoder, &params, &batch, objective, temperature, PassControl::default(), true)?;
    let lags = first.lags;
    let ctl = PassControl {
        dropout: None,
        lags: Some(&lags),
    };
    let analytic = batch_gradient(&encoder, &params, &batch, objective, temperature, ctl, true)?
        .grad
        .expect("gradient requested");
    let value = |p: &ModelParams| -> Result<f64> {
        Ok(batch_gradient(&encoder, p, &batch, objective, temperature, ctl, false)?
            .losses
            .total)
    };

    let mut report = GradCheckReport {
        loss,
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let analytic_tensors: Vec<(String, Vec<f64>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, _, v)| (n, v.to_vec()))
        .collect();
    for (t, (name, ga)) in analytic_tensors.iter().enumerate() {
        for (i, &g_a) in ga.iter().enumerate() {
            let orig = params.tensors_mut()[t][i];
            params.tensors_mut()[t][i] = orig + FD_EPSILON;
            let up = value(&params)?;
            params.tensors_mut()[t][i] = orig - FD_EPSILON;
            let down = value(&params)?;
            params.tensors_mut()[t][i] = orig;
            let g_fd = (up - down) / (2.0 * FD_EPSILON);
            let rel = (g_a - g_fd).abs() / g_a.abs().max(g_fd.abs()).max(1e-8);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}[{i}]");
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
