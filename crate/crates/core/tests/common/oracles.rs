//! Independent reference implementations. Everything here works on plain
//! nested `Vec`s with explicit loops and shares no code with the crate
//! beyond reading parameter values.
#![allow(dead_code)]

use fearec_core::encoder::FeaLayerParams;
use ndarray::Array2;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(a: &Array2<f64>) -> Mat {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn matmul(a: &Mat, b: &Array2<f64>) -> Mat {
    a.iter()
        .map(|row| {
            (0..b.ncols())
                .map(|j| row.iter().enumerate().map(|(k, v)| v * b[(k, j)]).sum())
                .collect()
        })
        .collect()
}

/// Direct DFT, `X_k = sum_n x_n e^{-2 pi i n k / N}`, as (re, im) pairs for
/// `k = 0..=N/2`.
pub fn dft_half(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let th = -2.0 * std::f64::consts::PI * (t * k) as f64 / n as f64;
                (re + v * th.cos(), im + v * th.sin())
            })
        })
        .collect()
}

/// `r(tau) = sum_n q_n k_{(n - tau) mod N}` for `tau = 1..=N`.
pub fn correlation(q: &[f64], k: &[f64]) -> Vec<f64> {
    let n = q.len();
    (1..=n)
        .map(|tau| (0..n).map(|i| q[i] * k[(i + n - tau % n) % n]).sum())
        .collect()
}

pub fn layer_norm_rows(x: &Mat, gain: &[f64], bias: &[f64]) -> Mat {
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let sd = (var + 1e-12).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / sd * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// A plain transformer block of the self-attentive recommender family:
/// causal multi-head attention (padding keys masked), output projection,
/// GELU feed-forward on the attention output, residual sum, layer norm;
/// padded rows zeroed.
pub fn sasrec_block(lp: &FeaLayerParams, h: &Mat, heads: usize, valid: &[bool]) -> Mat {
    let n = h.len();
    let d = h[0].len();
    let dh = d / heads;
    let (q, k, v) = (matmul(h, &lp.wq), matmul(h, &lp.wk), matmul(h, &lp.wv));
    let mut att = vec![vec![0.0; d]; n];
    for hd in 0..heads {
        let cols = hd * dh..(hd + 1) * dh;
        for i in 0..n {
            let keys: Vec<usize> = (0..=i).filter(|&j| valid[j]).collect();
            let keys = if keys.is_empty() { vec![i] } else { keys };
            let scores: Vec<f64> = keys
                .iter()
                .map(|&j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (&j, e) in keys.iter().zip(&exps) {
                for c in cols.clone() {
                    att[i][c] += e / z * v[j][c];
                }
            }
        }
    }
    let hhat = matmul(&att, &lp.wo);
    let mut z1 = matmul(&hhat, &lp.ffn_w1);
    for row in &mut z1 {
        for (j, x) in row.iter_mut().enumerate() {
            *x = gelu(*x + lp.ffn_b1[j]);
        }
    }
    let mut ffn = matmul(&z1, &lp.ffn_w2);
    for row in &mut ffn {
        for (j, x) in row.iter_mut().enumerate() {
            *x += lp.ffn_b2[j];
        }
    }
    let pre: Mat = (0..n)
        .map(|i| (0..d).map(|j| h[i][j] + hhat[i][j] + ffn[i][j]).collect())
        .collect();
    let mut out = layer_norm_rows(&pre, lp.norm.gain.as_slice().unwrap(), lp.norm.bias.as_slice().unwrap());
    for (row, &ok) in out.iter_mut().zip(valid) {
        if !ok {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    out
}

pub fn max_abs_diff(a: &Mat, b: &Array2<f64>) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m = m.max((v - b[(i, j)]).abs());
        }
    }
    m
}
