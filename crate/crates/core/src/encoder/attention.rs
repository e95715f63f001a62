//! Multi-head scaled dot-product attention over band-filtered inputs.

use ndarray::{s, Array2, ArrayView2};

use super::ops::{softmax_backward, softmax_in_place};

/// Attention probabilities per head, each `[N x N]`.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub probs: Vec<Array2<f64>>,
}

/// Whether query `i` may attend to key `j`. Padding keys are always
/// excluded; a query with no admissible key attends to itself.
fn admissible(valid: &[bool], causal: bool) -> Array2<bool> {
    let n = valid.len();
    let mut allowed = Array2::from_shape_fn((n, n), |(i, j)| valid[j] && (!causal || j <= i));
    for i in 0..n {
        if !allowed.row(i).iter().any(|&a| a) {
            allowed[(i, i)] = true;
        }
    }
    allowed
}

/// `softmax(Q_h K_h^T / sqrt(d_h)) V_h` per head, heads concatenated along
/// the feature axis. Output projection is left to the caller.
pub fn multi_head_attention(
    q: ArrayView2<'_, f64>,
    k: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
    num_heads: usize,
    valid: &[bool],
    causal: bool,
) -> (Array2<f64>, AttentionCache) {
    let (n, d) = q.dim();
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let allowed = admissible(valid, causal);
    let mut out = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
            let r = row.as_slice_mut().expect("contiguous row");
            for (j, x) in r.iter_mut().enumerate() {
                *x = if allowed[(i, j)] {
                    *x * scale
                } else {
                    f64::NEG_INFINITY
                };
            }
            softmax_in_place(r);
        }
        out.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    (out, AttentionCache { probs })
}

/// Gradients with respect to `(q, k, v)` given the upstream gradient of the
/// concatenated head outputs.
pub fn multi_head_attention_backward(
    dout: ArrayView2<'_, f64>,
    cache: &AttentionCache,
    q: ArrayView2<'_, f64>,
    k: ArrayView2<'_, f64>,
    v: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (n, d) = q.dim();
    let num_heads = cache.probs.len();
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for (h, probs) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_head = dout.slice(cols);
        let dprobs = d_head.dot(&v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&d_head));
        let mut dscores = Array2::zeros((n, n));
        for i in 0..n {
            let y = probs.row(i);
            let dy = dprobs.row(i);
            let g = softmax_backward(y.as_slice().expect("contiguous"), dy.as_slice().expect("contiguous"));
            for (j, gv) in g.into_iter().enumerate() {
                dscores[(i, j)] = gv * scale;
            }
        }
        dq.slice_mut(cols).assign(&dscores.dot(&k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&q.slice(cols)));
    }
    (dq, dk, dv)
}
