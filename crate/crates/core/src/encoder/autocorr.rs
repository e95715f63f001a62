//! Frequency-domain attention: auto-correlation scores over all lags via the
//! spectrum, top-k lag selection and time-delay aggregation of rolled values.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::ops::{softmax_backward, softmax_in_place};
use crate::error::{Error, Result};
use crate::ramp::{sample_band, zero_pad_band, Band};
use crate::spectral::{self, half_len, top_k_lags};

/// Lags chosen by one head and their softmax weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub head: usize,
    pub lags: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Lag sets to reuse instead of selecting top-k, indexed `[head]`.
pub type HeadLags = Vec<Vec<usize>>;

/// Circular roll along the time axis: output row `t` is input row
/// `(t + tau) mod N`. `tau == N` is the identity.
pub fn roll_rows(x: ArrayView2<'_, f64>, tau: usize) -> Result<Array2<f64>> {
    let n = x.nrows();
    if tau == 0 || tau > n {
        return Err(Error::LagOutOfRange { lag: tau, len: n });
    }
    let shift = tau % n;
    let mut out = Array2::zeros(x.raw_dim());
    out.slice_mut(s![..n - shift, ..])
        .assign(&x.slice(s![shift.., ..]));
    out.slice_mut(s![n - shift.., ..])
        .assign(&x.slice(s![..shift, ..]));
    Ok(out)
}

/// Per-head correlation scores indexed by lag `tau = 1..=N` (position
/// `tau - 1`): band-sampled spectra of `q` and `k` are multiplied with the
/// conjugate, zero padded, inverted, and averaged over the head's features.
pub fn head_correlations(
    q: ArrayView2<'_, f64>,
    k: ArrayView2<'_, f64>,
    band: Band,
    num_heads: usize,
) -> Result<Vec<Vec<f64>>> {
    let (n, d) = q.dim();
    if k.dim() != (n, d) {
        return Err(Error::ShapeMismatch(format!(
            "query {:?} vs key {:?}",
            q.dim(),
            k.dim()
        )));
    }
    let m = half_len(n);
    let qf = sample_band(spectral::rfft_columns(q).view(), band)?;
    let kf = sample_band(spectral::rfft_columns(k).view(), band)?;
    let mut cross = qf;
    Zip::from(&mut cross).and(&kf).for_each(|a, b| *a *= b.conj());
    let padded = zero_pad_band(cross.view(), band, m)?;
    let r = spectral::irfft_columns(padded.view(), n)?;
    let dh = d / num_heads;
    Ok((0..num_heads)
        .map(|h| {
            let mean = r
                .slice(s![.., h * dh..(h + 1) * dh])
                .mean_axis(Axis(1))
                .expect("non-empty head");
            spectral::lag_order(mean.as_slice().expect("contiguous"))
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct AutoCorrelationCache {
    pub reports: Vec<DelayReport>,
}

/// Time-delay aggregation. `q`, `k` are the unfiltered projections (their
/// spectra are band-sampled here); `v_filtered` is the band-limited value.
pub fn time_delay_aggregation(
    q: ArrayView2<'_, f64>,
    k: ArrayView2<'_, f64>,
    v_filtered: ArrayView2<'_, f64>,
    band: Band,
    num_heads: usize,
    top_k: usize,
    fixed_lags: Option<&HeadLags>,
) -> Result<(Array2<f64>, AutoCorrelationCache)> {
    let (n, d) = v_filtered.dim();
    let dh = d / num_heads;
    let scores = head_correlations(q, k, band, num_heads)?;
    let mut out = Array2::zeros((n, d));
    let mut reports = Vec::with_capacity(num_heads);
    for (h, head_scores) in scores.iter().enumerate() {
        let lags = match fixed_lags {
            Some(fixed) => fixed[h].clone(),
            None => top_k_lags(head_scores, top_k),
        };
        let mut weights: Vec<f64> = lags.iter().map(|&t| head_scores[t - 1]).collect();
        softmax_in_place(&mut weights);
        let cols = s![.., h * dh..(h + 1) * dh];
        let v_head = v_filtered.slice(cols);
        let mut acc = out.slice_mut(cols);
        for (&tau, &w) in lags.iter().zip(&weights) {
            acc.scaled_add(w, &roll_rows(v_head, tau)?);
        }
        reports.push(DelayReport {
            head: h,
            lags,
            weights,
        });
    }
    Ok((out, AutoCorrelationCache { reports }))
}

/// Backward of [`time_delay_aggregation`] with the lag sets held fixed.
///
/// The band-sampled cross spectrum equals the spectrum of the correlation of
/// the band-filtered inputs, so gradients are returned with respect to the
/// filtered `q`, `k` and `v`; the caller applies the filter adjoint.
pub fn time_delay_aggregation_backward(
    dout: ArrayView2<'_, f64>,
    cache: &AutoCorrelationCache,
    q_filtered: ArrayView2<'_, f64>,
    k_filtered: ArrayView2<'_, f64>,
    v_filtered: ArrayView2<'_, f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let (n, d) = v_filtered.dim();
    let num_heads = cache.reports.len();
    let dh = d / num_heads;
    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for report in &cache.reports {
        let c0 = report.head * dh;
        let mut dweights = Vec::with_capacity(report.lags.len());
        for (&tau, &w) in report.lags.iter().zip(&report.weights) {
            let mut dw = 0.0;
            for t in 0..n {
                let src = (t + tau) % n;
                for j in c0..c0 + dh {
                    let g = dout[(t, j)];
                    dw += g * v_filtered[(src, j)];
                    dv[(src, j)] += w * g;
                }
            }
            dweights.push(dw);
        }
        let dscores = softmax_backward(&report.weights, &dweights);
        // score(tau) = (1/dh) sum_j sum_t q[t, j] k[(t - tau) mod n, j]
        for (&tau, &ds) in report.lags.iter().zip(&dscores) {
            let g = ds / dh as f64;
            for t in 0..n {
                let back = (t + n - tau % n) % n;
                for j in c0..c0 + dh {
                    dq[(t, j)] += g * k_filtered[(back, j)];
                    dk[(back, j)] += g * q_filtered[(t, j)];
                }
            }
        }
    }
    (dq, dk, dv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ramp::BandFilter;

    fn mat(n: usize, d: usize, seed: f64) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |(i, j)| ((i * d + j) as f64 * seed).sin())
    }

    #[test]
    fn roll_matches_definition() {
        let x = Array2::from_shape_fn((4, 1), |(i, _)| (i + 1) as f64);
        let r = roll_rows(x.view(), 1).unwrap();
        assert_eq!(r.column(0).to_vec(), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(roll_rows(x.view(), 4).unwrap(), x);
        assert!(roll_rows(x.view(), 0).is_err());
        assert!(roll_rows(x.view(), 5).is_err());
    }

    #[test]
    fn roll_composes_to_identity() {
        let x = mat(7, 3, 0.4);
        for tau in 1..7 {
            let back = roll_rows(roll_rows(x.view(), tau).unwrap().view(), 7 - tau).unwrap();
            assert_eq!(back, x);
        }
    }

    #[test]
    fn correlations_match_brute_force_on_filtered_inputs() {
        let (n, d) = (9, 4);
        let band = Band { start: 1, end: 4, layer: 1 };
        let (q, k) = (mat(n, d, 0.37), mat(n, d, 0.91));
        let scores = head_correlations(q.view(), k.view(), band, 2).unwrap();
        let f = BandFilter::new(band, n).unwrap();
        let (qt, kt) = (f.apply(q.view()), f.apply(k.view()));
        for h in 0..2 {
            let mut expect = vec![0.0; n];
            for j in h * 2..h * 2 + 2 {
                let col_q: Vec<f64> = qt.column(j).to_vec();
                let col_k: Vec<f64> = kt.column(j).to_vec();
                let p = spectral::brute_cross_correlation(&col_q, &col_k).unwrap();
                for (e, s) in expect.iter_mut().zip(p.scores()) {
                    *e += s / 2.0;
                }
            }
            for (a, b) in scores[h].iter().zip(&expect) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weights_sum_to_one_and_single_lag_is_a_roll() {
        let (n, d) = (8, 4);
        let band = Band::full(half_len(n), 1);
        let (q, k, v) = (mat(n, d, 0.2), mat(n, d, 0.6), mat(n, d, 1.7));
        let (_, cache) = time_delay_aggregation(q.view(), k.view(), v.view(), band, 2, 3, None).unwrap();
        for r in &cache.reports {
            assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let mut sorted = r.lags.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), 3);
        }
        let (out, cache) = time_delay_aggregation(q.view(), k.view(), v.view(), band, 1, 1, None).unwrap();
        let tau = cache.reports[0].lags[0];
        assert_eq!(cache.reports[0].weights, vec![1.0]);
        assert_eq!(out, roll_rows(v.view(), tau).unwrap());
    }

    #[test]
    fn backward_matches_finite_differences_with_fixed_lags() {
        let (n, d) = (6, 4);
        let band = Band { start: 0, end: 3, layer: 1 };
        let f = BandFilter::new(band, n).unwrap();
        let (q, k, v) = (mat(n, d, 0.33), mat(n, d, 0.71), mat(n, d, 1.23));
        let w = mat(n, d, 2.9);
        let vt = f.apply(v.view());
        let (_, cache) = time_delay_aggregation(q.view(), k.view(), vt.view(), band, 2, 2, None).unwrap();
        let lags: HeadLags = cache.reports.iter().map(|r| r.lags.clone()).collect();
        let loss = |q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>| {
            let vt = f.apply(v.view());
            let (o, _) = time_delay_aggregation(q.view(), k.view(), vt.view(), band, 2, 2, Some(&lags)).unwrap();
            (&o * &w).sum()
        };
        let (qt, kt) = (f.apply(q.view()), f.apply(k.view()));
        let (dqt, dkt, dvt) = time_delay_aggregation_backward(w.view(), &cache, qt.view(), kt.view(), vt.view());
        let grads = [
            f.apply_transpose(dqt.view()),
            f.apply_transpose(dkt.view()),
            f.apply_transpose(dvt.view()),
        ];
        let eps = 1e-6;
        for which in 0..3 {
            for i in 0..n {
                for j in 0..d {
                    let mut mats = [q.clone(), k.clone(), v.clone()];
                    mats[which][(i, j)] += eps;
                    let up = loss(&mats[0], &mats[1], &mats[2]);
                    mats[which][(i, j)] -= 2.0 * eps;
                    let down = loss(&mats[0], &mats[1], &mats[2]);
                    let fd = (up - down) / (2.0 * eps);
                    assert!((fd - grads[which][(i, j)]).abs() < 1e-7, "{which} ({i},{j})");
                }
            }
        }
    }
}
