use std::fmt;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::Serialize;

use super::loss::{contrastive_loss_grad, freq_reg_loss_grad, rec_loss_grad, LossBreakdown, LossWeights};
use super::optim::{Adam, TrainConfig};
use crate::data::{make_batches, Example, SemanticIndex, SequenceBatch, SequenceDataset};
use crate::encoder::{
    predict_scores, predict_scores_backward, readout_position, Encoder, Forward, LagSet,
    ModelConfig, ModelParams,
};
use crate::error::{Error, Result};
use crate::par::map_indexed;
use crate::rng::stream;

const INIT_STREAM: u64 = 0x1417;
const DROPOUT_STREAM: u64 = 0xD809;

/// Examples are backpropagated in fixed-size chunks whose gradients are
/// summed in chunk order, so the result does not depend on the number of
/// worker threads.
const GRAD_CHUNK: usize = 8;

/// Forward passes per example: the recommendation pass, the second dropout
/// view of the same sequence, and the semantic-positive view.
const PASS_REC: usize = 0;
const PASS_VIEW: usize = 1;
const PASS_POSITIVE: usize = 2;

/// Coefficients of the three loss terms in the objective being
/// differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub rec: f64,
    pub cl: f64,
    pub freg: f64,
}

impl From<LossWeights> for Objective {
    fn from(w: LossWeights) -> Self {
        Self {
            rec: 1.0,
            cl: w.lambda1,
            freg: w.lambda2,
        }
    }
}

impl Objective {
    fn needs_views(&self) -> bool {
        self.cl > 0.0 || self.freg > 0.0
    }
}

/// Lag sets of every pass of every example in a batch, `[example][pass]`.
pub type BatchLags = Vec<Vec<LagSet>>;

/// How the stochastic and discrete parts of the forward passes are driven.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassControl<'a> {
    /// `(seed, step)` enables dropout with per-example, per-pass streams.
    pub dropout: Option<(u64, u64)>,
    /// Reuse these lag sets instead of selecting top-k.
    pub lags: Option<&'a BatchLags>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub losses: LossBreakdown,
    pub grad: Option<ModelParams>,
    pub lags: BatchLags,
}

fn state_matrix(fwds: &[Vec<Forward>], pass: usize) -> Array2<f64> {
    let d = fwds[0][pass].hidden.ncols();
    let mut m = Array2::zeros((fwds.len(), d));
    for (mut row, f) in m.rows_mut().into_iter().zip(fwds) {
        row.assign(&f[pass].final_state());
    }
    m
}

fn readout_gradient(fwd: &Forward, d_state: ndarray::ArrayView1<'_, f64>) -> Array2<f64> {
    let mut d = Array2::zeros(fwd.hidden.raw_dim());
    d.row_mut(readout_position(fwd.ids())).assign(&d_state);
    d
}

/// Losses of `batch` under `objective` and, when `want_grad`, their
/// gradient with respect to `params`.
///
/// Every loss term is a mean over the batch (the contrastive term is
/// normalized by its own definition).
pub fn batch_gradient(
    encoder: &Encoder,
    params: &ModelParams,
    batch: &SequenceBatch,
    objective: Objective,
    temperature: f64,
    ctl: PassControl<'_>,
    want_grad: bool,
) -> Result<BatchResult> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::Empty("batch"));
    }
    if objective.cl > 0.0 && b < 2 {
        return Err(Error::NoNegatives(b));
    }
    let passes = if objective.needs_views() { 3 } else { 1 };
    let fwds: Vec<Vec<Forward>> = map_indexed(b, |e| {
        (0..passes)
            .map(|p| {
                let ids = if p == PASS_POSITIVE { &batch.positive_ids[e] } else { &batch.ids[e] };
                let mut rng = ctl
                    .dropout
                    .map(|(seed, step)| stream(seed, &[DROPOUT_STREAM, step, e as u64, p as u64]));
                encoder.forward(params, ids, rng.as_mut(), ctl.lags.map(|l| &l[e][p]))
            })
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let bf = b as f64;

    let mut rec = 0.0;
    let mut d_logits = Vec::with_capacity(b);
    for (f, &target) in fwds.iter().zip(&batch.targets) {
        let logits = predict_scores(params, f[PASS_REC].final_state());
        let (l, g) = rec_loss_grad(logits.view(), target)?;
        rec += l / bf;
        d_logits.push(Array1::from(g) * (objective.rec / bf));
    }

    let (mut cl, mut freg) = (0.0, 0.0);
    let mut d_views = None;
    if passes == 3 {
        let hu = state_matrix(&fwds, PASS_VIEW);
        let hs = state_matrix(&fwds, PASS_POSITIVE);
        let (mut du, mut ds) = (Array2::zeros(hu.raw_dim()), Array2::zeros(hs.raw_dim()));
        if b >= 2 {
            let (l, gu, gs) = contrastive_loss_grad(hu.view(), hs.view(), temperature)?;
            cl = l;
            du.scaled_add(objective.cl, &gu);
            ds.scaled_add(objective.cl, &gs);
        }
        for e in 0..b {
            let (l, g) = freq_reg_loss_grad(hu.row(e), hs.row(e))?;
            freg += l / bf;
            let g = Array1::from(g) * (objective.freg / bf);
            let mut r = du.row_mut(e);
            r += &g;
            let mut r = ds.row_mut(e);
            r -= &g;
        }
        d_views = Some((du, ds));
    }
    let total = objective.rec * rec + objective.cl * cl + objective.freg * freg;
    for (name, v) in [("rec_loss", rec), ("cl_loss", cl), ("freg_loss", freg), ("total loss", total)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    let losses = LossBreakdown { rec, cl, freg, total };
    let lags: BatchLags = fwds
        .iter()
        .map(|f| f.iter().map(Forward::lag_set).collect())
        .collect();

    let grad = want_grad.then(|| {
        let chunks = b.div_ceil(GRAD_CHUNK);
        let partial = map_indexed(chunks, |c| {
            let mut g = params.zeros_like();
            for e in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(b) {
                let f = &fwds[e];
                if objective.rec != 0.0 {
                    let state = f[PASS_REC].final_state();
                    let d_state = predict_scores_backward(params, state, d_logits[e].view(), &mut g);
                    encoder.backward(params, &f[PASS_REC], readout_gradient(&f[PASS_REC], d_state.view()).view(), &mut g);
                }
                if let Some((du, ds)) = &d_views {
                    encoder.backward(params, &f[PASS_VIEW], readout_gradient(&f[PASS_VIEW], du.row(e)).view(), &mut g);
                    encoder.backward(params, &f[PASS_POSITIVE], readout_gradient(&f[PASS_POSITIVE], ds.row(e)).view(), &mut g);
                }
            }
            g
        });
        let mut iter = partial.into_iter();
        let mut acc = iter.next().expect("at least one chunk");
        for g in iter {
            acc.add_assign(&g);
        }
        acc
    });
    Ok(BatchResult { losses, grad, lags })
}

/// One optimization step on `batch`: three forward passes per example
/// (independent dropout masks), backpropagation of the weighted objective,
/// an Adam update and re-zeroing of the padding embedding.
pub fn train_step(
    encoder: &Encoder,
    params: &mut ModelParams,
    adam: &mut Adam,
    batch: &SequenceBatch,
    weights: &LossWeights,
    cfg: &TrainConfig,
    step: u64,
) -> Result<LossBreakdown> {
    let ctl = PassControl {
        dropout: Some((cfg.seed, step)),
        lags: None,
    };
    let out = batch_gradient(encoder, params, batch, (*weights).into(), cfg.cl_temperature, ctl, true)?;
    let grad = out.grad.expect("gradient requested");
    if let Some(name) = grad.first_non_finite() {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    adam.step(params, &grad);
    params.zero_padding_row();
    Ok(out.losses)
}

/// Per-epoch training summary; `Display` renders one structured log line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub rec_loss: f64,
    pub cl_loss: f64,
    pub freg_loss: f64,
    pub total: f64,
    pub wall_seconds: f64,
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} rec_loss={:.6} cl_loss={:.6} freg_loss={:.6} total={:.6} wall_seconds={:.3}",
            self.epoch, self.rec_loss, self.cl_loss, self.freg_loss, self.total, self.wall_seconds
        )
    }
}

/// Owns the model, optimizer state and training examples of one run.
#[derive(Debug, Clone)]
pub struct Trainer {
    encoder: Encoder,
    params: ModelParams,
    adam: Adam,
    cfg: TrainConfig,
    weights: LossWeights,
    examples: Vec<Example>,
    index: SemanticIndex,
    epoch: usize,
    step: u64,
}

impl Trainer {
    /// Fresh parameters drawn from the run seed.
    pub fn new(model: ModelConfig, cfg: TrainConfig, weights: LossWeights, ds: &SequenceDataset) -> Result<Self> {
        let params = ModelParams::init(&model, &mut stream(cfg.seed, &[INIT_STREAM]))?;
        Self::with_params(model, cfg, weights, ds, params)
    }

    pub fn with_params(
        model: ModelConfig,
        cfg: TrainConfig,
        weights: LossWeights,
        ds: &SequenceDataset,
        params: ModelParams,
    ) -> Result<Self> {
        cfg.validate()?;
        weights.validate()?;
        if model.num_items != ds.num_items() {
            return Err(Error::Vocabulary(format!(
                "model has {} items, dataset has {}",
                model.num_items,
                ds.num_items()
            )));
        }
        let encoder = Encoder::new(model)?;
        let examples = ds.training_examples(cfg.all_prefixes);
        if examples.is_empty() {
            return Err(Error::Empty("training examples"));
        }
        let index = SemanticIndex::build(&examples);
        let adam = Adam::new(&params, &cfg);
        Ok(Self {
            encoder,
            params,
            adam,
            cfg,
            weights,
            examples,
            index,
            epoch: 0,
            step: 0,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let batches = make_batches(
            &self.examples,
            &self.index,
            self.cfg.batch_size,
            self.encoder.config().max_len,
            self.cfg.seed,
            self.epoch as u64,
        );
        let mut sums = LossBreakdown::default();
        let mut count = 0.0;
        for batch in &batches {
            let l = train_step(
                &self.encoder,
                &mut self.params,
                &mut self.adam,
                batch,
                &self.weights,
                &self.cfg,
                self.step,
            )?;
            self.step += 1;
            let w = batch.len() as f64;
            sums.rec += w * l.rec;
            sums.cl += w * l.cl;
            sums.freg += w * l.freg;
            sums.total += w * l.total;
            count += w;
        }
        self.epoch += 1;
        Ok(EpochLog {
            epoch: self.epoch,
            rec_loss: sums.rec / count,
            cl_loss: sums.cl / count,
            freg_loss: sums.freg / count,
            total: sums.total / count,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }
}
