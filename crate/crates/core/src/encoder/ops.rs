//! Row-wise primitives with their backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use super::params::LayerNormParams;
use crate::rng::Rng;

pub const LN_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// Row-wise layer normalization; returns the output and the
/// normalized input (before gain/bias) for the backward pass.
pub fn layer_norm(x: ArrayView2<'_, f64>, p: &LayerNormParams) -> (Array2<f64>, LayerNormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let out = &xhat * &p.gain + &p.bias;
    (out, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    cache: &LayerNormCache,
    p: &LayerNormParams,
    dout: ArrayView2<'_, f64>,
    grad: &mut LayerNormParams,
) -> Array2<f64> {
    let d = dout.ncols() as f64;
    grad.gain += &(&dout * &cache.xhat).sum_axis(Axis(0));
    grad.bias += &dout.sum_axis(Axis(0));
    let dxhat = &dout * &p.gain;
    let mut dx = Array2::zeros(dout.raw_dim());
    for (((mut out, g), xh), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let sum_g = g.sum();
        let sum_gx = g.dot(&xh);
        Zip::from(&mut out)
            .and(&g)
            .and(&xh)
            .for_each(|o, &gi, &xi| *o = s / d * (d * gi - sum_g - xi * sum_gx));
    }
    dx
}

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Inverted-dropout mask: entries are `0` or `1/(1-p)`. `None` when `p == 0`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut Rng) -> Option<Array2<f64>> {
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(Array2::from_shape_simple_fn((rows, cols), || {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

/// Numerically stable softmax over a slice, in place.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Backward of softmax given its output `y` and upstream gradient `dy`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(a, b)| a * (b - dot)).collect()
}
