use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::autocorr::{DelayReport, HeadLags};
use super::block::{fea_block, fea_block_backward, BlockCache};
use super::config::ModelConfig;
use super::ops::{dropout_mask, layer_norm, layer_norm_backward, LayerNormCache};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::ramp::BandFilter;
use crate::rng::Rng;

/// Selected lags for every layer and head, `[layer][head]`.
pub type LagSet = Vec<HeadLags>;

#[derive(Debug, Clone)]
struct EmbedCache {
    norm: LayerNormCache,
    drop: Option<Array2<f64>>,
}

/// Activations of one forward pass, kept for the backward pass and for
/// attention inspection.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Array2<f64>,
    ids: Vec<usize>,
    valid: Vec<bool>,
    embed: EmbedCache,
    pub blocks: Vec<BlockCache>,
}

impl Forward {
    /// Delay reports per layer (outer) and head (inner).
    pub fn delay_reports(&self) -> Vec<Vec<DelayReport>> {
        self.blocks
            .iter()
            .map(|b| b.autocorr.reports.clone())
            .collect()
    }

    pub fn lag_set(&self) -> LagSet {
        self.blocks
            .iter()
            .map(|b| b.autocorr.reports.iter().map(|r| r.lags.clone()).collect())
            .collect()
    }

    /// Time-domain attention probabilities of `layer` (0-based), per head.
    pub fn attention(&self, layer: usize) -> &[Array2<f64>] {
        &self.blocks[layer].attention.probs
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Hidden state at the readout position.
    pub fn final_state(&self) -> ArrayView1<'_, f64> {
        self.hidden.row(readout_position(&self.ids))
    }
}

/// Index of the last non-padding position (the last row when the sequence
/// is all padding).
pub fn readout_position(ids: &[usize]) -> usize {
    ids.iter()
        .rposition(|&id| id != 0)
        .unwrap_or(ids.len().saturating_sub(1))
}

/// Stateless encoder: configuration plus the per-layer band filters derived
/// from it.
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: ModelConfig,
    filters: Vec<BandFilter>,
}

impl Encoder {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let filters = cfg
            .ramp()?
            .bands()
            .into_iter()
            .map(|b| BandFilter::new(b, cfg.max_len))
            .collect::<Result<_>>()?;
        Ok(Self { cfg, filters })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn filters(&self) -> &[BandFilter] {
        &self.filters
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.num_items() != self.cfg.num_items
            || params.dim() != self.cfg.dim
            || params.layers.len() != self.cfg.num_layers
            || params.pos_table.nrows() != self.cfg.max_len
        {
            return Err(Error::ShapeMismatch(format!(
                "parameters ({} items, dim {}, {} layers, {} positions) do not fit the config",
                params.num_items(),
                params.dim(),
                params.layers.len(),
                params.pos_table.nrows()
            )));
        }
        Ok(())
    }

    fn check_ids(&self, ids: &[usize]) -> Result<()> {
        if ids.len() != self.cfg.max_len {
            return Err(Error::ShapeMismatch(format!(
                "sequence of length {} for max_len {}",
                ids.len(),
                self.cfg.max_len
            )));
        }
        if let Some(&id) = ids.iter().find(|&&id| id > self.cfg.num_items) {
            return Err(Error::ItemOutOfRange {
                id,
                max: self.cfg.num_items,
            });
        }
        Ok(())
    }

    /// `Dropout(LayerNorm(item + position))` with padded rows zeroed.
    pub fn embed(
        &self,
        params: &ModelParams,
        ids: &[usize],
        rng: Option<&mut Rng>,
    ) -> Result<Array2<f64>> {
        self.check_params(params)?;
        self.check_ids(ids)?;
        Ok(self.embed_inner(params, ids, rng).0)
    }

    fn embed_inner(
        &self,
        params: &ModelParams,
        ids: &[usize],
        rng: Option<&mut Rng>,
    ) -> (Array2<f64>, EmbedCache) {
        let (n, d) = (self.cfg.max_len, self.cfg.dim);
        let mut x = params.pos_table.clone();
        for (t, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(t);
            row += &params.item_table.row(id);
        }
        let (mut e, norm) = layer_norm(x.view(), &params.emb_norm);
        let drop = rng.and_then(|r| dropout_mask(n, d, self.cfg.dropout, r));
        if let Some(mask) = &drop {
            e *= mask;
        }
        for (mut row, &id) in e.rows_mut().into_iter().zip(ids) {
            if id == 0 {
                row.fill(0.0);
            }
        }
        (e, EmbedCache { norm, drop })
    }

    /// Full forward pass. Passing `rng` turns on dropout (training mode);
    /// `fixed_lags` replaces top-k selection with the given lag sets.
    pub fn forward(
        &self,
        params: &ModelParams,
        ids: &[usize],
        mut rng: Option<&mut Rng>,
        fixed_lags: Option<&LagSet>,
    ) -> Result<Forward> {
        self.check_params(params)?;
        self.check_ids(ids)?;
        let valid: Vec<bool> = ids.iter().map(|&id| id != 0).collect();
        let (mut h, embed) = self.embed_inner(params, ids, rng.as_deref_mut());
        let mut blocks = Vec::with_capacity(self.cfg.num_layers);
        for (l, (lp, filter)) in params.layers.iter().zip(&self.filters).enumerate() {
            let (out, cache) = fea_block(
                lp,
                h.view(),
                filter,
                &self.cfg,
                &valid,
                rng.as_deref_mut(),
                fixed_lags.map(|f| &f[l]),
            )?;
            h = out;
            blocks.push(cache);
        }
        Ok(Forward {
            hidden: h,
            ids: ids.to_vec(),
            valid,
            embed,
            blocks,
        })
    }

    /// Final hidden states and per-layer delay reports.
    pub fn encode(
        &self,
        params: &ModelParams,
        ids: &[usize],
        rng: Option<&mut Rng>,
    ) -> Result<(Array2<f64>, Vec<Vec<DelayReport>>)> {
        let fwd = self.forward(params, ids, rng, None)?;
        let reports = fwd.delay_reports();
        Ok((fwd.hidden, reports))
    }

    /// Accumulates into `grad` the gradient of a scalar whose derivative
    /// with respect to the final hidden states is `d_hidden`.
    pub fn backward(
        &self,
        params: &ModelParams,
        fwd: &Forward,
        d_hidden: ArrayView2<'_, f64>,
        grad: &mut ModelParams,
    ) {
        let mut d = d_hidden.to_owned();
        for l in (0..self.cfg.num_layers).rev() {
            d = fea_block_backward(
                &params.layers[l],
                &fwd.blocks[l],
                &self.filters[l],
                &self.cfg,
                d.view(),
                &mut grad.layers[l],
            );
        }
        for (mut row, &ok) in d.rows_mut().into_iter().zip(&fwd.valid) {
            if !ok {
                row.fill(0.0);
            }
        }
        if let Some(mask) = &fwd.embed.drop {
            d *= mask;
        }
        let dx = layer_norm_backward(&fwd.embed.norm, &params.emb_norm, d.view(), &mut grad.emb_norm);
        for (t, &id) in fwd.ids.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let g = dx.row(t);
            let mut item = grad.item_table.row_mut(id);
            item += &g;
            let mut pos = grad.pos_table.row_mut(t);
            pos += &g;
        }
    }
}

/// Scores of every catalog item for the hidden state `state`; the padding
/// id scores `-inf`.
pub fn predict_scores(params: &ModelParams, state: ArrayView1<'_, f64>) -> Array1<f64> {
    let mut logits = params.item_table.dot(&state);
    logits[0] = f64::NEG_INFINITY;
    logits
}

/// Backward of [`predict_scores`]: accumulates the item-table gradient and
/// returns the gradient with respect to `state`. Entry 0 of `d_logits` is
/// ignored.
pub fn predict_scores_backward(
    params: &ModelParams,
    state: ArrayView1<'_, f64>,
    d_logits: ArrayView1<'_, f64>,
    grad: &mut ModelParams,
) -> Array1<f64> {
    let mut dl = d_logits.to_owned();
    dl[0] = 0.0;
    for (mut row, &g) in grad.item_table.rows_mut().into_iter().zip(&dl) {
        if g != 0.0 {
            row.scaled_add(g, &state);
        }
    }
    params.item_table.t().dot(&dl)
}
