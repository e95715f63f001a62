//! One hybrid attention block: band-limited projections, time- and
//! frequency-domain attention mixed by `gamma`, GELU feed-forward,
//! residual sum and layer normalization.

use ndarray::{Array2, ArrayView2, Axis};

use super::attention::{multi_head_attention, multi_head_attention_backward, AttentionCache};
use super::autocorr::{
    time_delay_aggregation, time_delay_aggregation_backward, AutoCorrelationCache, HeadLags,
};
use super::config::ModelConfig;
use super::ops::{dropout_mask, gelu, gelu_grad, layer_norm, layer_norm_backward, LayerNormCache};
use super::params::FeaLayerParams;
use crate::error::Result;
use crate::ramp::BandFilter;
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct BlockCache {
    h_in: Array2<f64>,
    q_t: Array2<f64>,
    k_t: Array2<f64>,
    v_t: Array2<f64>,
    pub attention: AttentionCache,
    pub autocorr: AutoCorrelationCache,
    mix: Array2<f64>,
    hhat: Array2<f64>,
    z1: Array2<f64>,
    act: Array2<f64>,
    drop: Option<Array2<f64>>,
    norm: LayerNormCache,
    valid: Vec<bool>,
}

fn zero_rows(x: &mut Array2<f64>, valid: &[bool]) {
    for (mut row, &ok) in x.rows_mut().into_iter().zip(valid) {
        if !ok {
            row.fill(0.0);
        }
    }
}

/// Forward pass of one block. Rows at padded positions of the output are
/// zeroed. `rng` enables dropout on the feed-forward branch.
pub fn fea_block(
    lp: &FeaLayerParams,
    h: ArrayView2<'_, f64>,
    filter: &BandFilter,
    cfg: &ModelConfig,
    valid: &[bool],
    rng: Option<&mut Rng>,
    fixed_lags: Option<&HeadLags>,
) -> Result<(Array2<f64>, BlockCache)> {
    let q = h.dot(&lp.wq);
    let k = h.dot(&lp.wk);
    let v = h.dot(&lp.wv);
    let q_t = filter.apply(q.view());
    let k_t = filter.apply(k.view());
    let v_t = filter.apply(v.view());

    let (time_out, attention) = multi_head_attention(
        q_t.view(),
        k_t.view(),
        v_t.view(),
        cfg.num_heads,
        valid,
        cfg.causal_mask,
    );
    let (freq_out, autocorr) = time_delay_aggregation(
        q.view(),
        k.view(),
        v_t.view(),
        filter.band(),
        cfg.num_heads,
        cfg.top_k(),
        fixed_lags,
    )?;
    let gamma = cfg.gamma;
    let mix = &time_out * gamma + &freq_out * (1.0 - gamma);
    let hhat = mix.dot(&lp.wo);

    let z1 = hhat.dot(&lp.ffn_w1) + &lp.ffn_b1;
    let act = z1.mapv(gelu);
    let ffn = act.dot(&lp.ffn_w2) + &lp.ffn_b2;
    let drop = match rng {
        Some(rng) => dropout_mask(ffn.nrows(), ffn.ncols(), cfg.dropout, rng),
        None => None,
    };
    let ffn = match &drop {
        Some(mask) => ffn * mask,
        None => ffn,
    };

    let pre = &h + &hhat + &ffn;
    let (mut out, norm) = layer_norm(pre.view(), &lp.norm);
    zero_rows(&mut out, valid);
    Ok((
        out,
        BlockCache {
            h_in: h.to_owned(),
            q_t,
            k_t,
            v_t,
            attention,
            autocorr,
            mix,
            hhat,
            z1,
            act,
            drop,
            norm,
            valid: valid.to_vec(),
        },
    ))
}

/// Backward pass; accumulates parameter gradients into `grad` and returns
/// the gradient with respect to the block input.
pub fn fea_block_backward(
    lp: &FeaLayerParams,
    cache: &BlockCache,
    filter: &BandFilter,
    cfg: &ModelConfig,
    dout: ArrayView2<'_, f64>,
    grad: &mut FeaLayerParams,
) -> Array2<f64> {
    let mut dout = dout.to_owned();
    zero_rows(&mut dout, &cache.valid);
    let dpre = layer_norm_backward(&cache.norm, &lp.norm, dout.view(), &mut grad.norm);

    let mut dh = dpre.clone();
    let mut dhhat = dpre.clone();
    let dffn = match &cache.drop {
        Some(mask) => &dpre * mask,
        None => dpre,
    };
    grad.ffn_w2 += &cache.act.t().dot(&dffn);
    grad.ffn_b2 += &dffn.sum_axis(Axis(0));
    let mut dz1 = dffn.dot(&lp.ffn_w2.t());
    dz1.zip_mut_with(&cache.z1, |g, &z| *g *= gelu_grad(z));
    grad.ffn_w1 += &cache.hhat.t().dot(&dz1);
    grad.ffn_b1 += &dz1.sum_axis(Axis(0));
    dhhat += &dz1.dot(&lp.ffn_w1.t());

    grad.wo += &cache.mix.t().dot(&dhhat);
    let dmix = dhhat.dot(&lp.wo.t());
    let gamma = cfg.gamma;

    let (mut dq_t, mut dk_t, mut dv_t) = if gamma > 0.0 {
        let d_time = &dmix * gamma;
        multi_head_attention_backward(
            d_time.view(),
            &cache.attention,
            cache.q_t.view(),
            cache.k_t.view(),
            cache.v_t.view(),
        )
    } else {
        let z = Array2::zeros(dmix.raw_dim());
        (z.clone(), z.clone(), z)
    };
    if gamma < 1.0 {
        let d_freq = &dmix * (1.0 - gamma);
        let (a, b, c) = time_delay_aggregation_backward(
            d_freq.view(),
            &cache.autocorr,
            cache.q_t.view(),
            cache.k_t.view(),
            cache.v_t.view(),
        );
        dq_t += &a;
        dk_t += &b;
        dv_t += &c;
    }
    let dq = filter.apply_transpose(dq_t.view());
    let dk = filter.apply_transpose(dk_t.view());
    let dv = filter.apply_transpose(dv_t.view());
    let h_t = cache.h_in.t();
    grad.wq += &h_t.dot(&dq);
    grad.wk += &h_t.dot(&dk);
    grad.wv += &h_t.dot(&dv);
    dh += &dq.dot(&lp.wq.t());
    dh += &dk.dot(&lp.wk.t());
    dh += &dv.dot(&lp.wv.t());
    dh
}
