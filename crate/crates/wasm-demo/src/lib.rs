//! WebAssembly bindings for the interactive page in `www/`.
//!
//! Each exported function takes plain numbers or a `Float64Array` and
//! returns a JSON string; the pure-Rust halves are kept separate so they
//! can be tested natively.

use fearec_core::encoder::autocorr::{head_correlations, time_delay_aggregation};
use fearec_core::ramp::{RampSchedule, SamplingMode};
use fearec_core::rng::stream;
use fearec_core::spectral::cross_correlation_fft;
use fearec_core::Result;
use ndarray::Array2;
use rand::Rng as _;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct BandView {
    pub layer: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Serialize)]
pub struct RampView {
    pub mode: &'static str,
    pub spectrum_len: usize,
    pub bands: Vec<BandView>,
}

pub fn ramp_view(num_layers: usize, max_len: usize, alpha: f64) -> Result<RampView> {
    let s = RampSchedule::for_sequence(num_layers, max_len, alpha)?;
    Ok(RampView {
        mode: match s.mode() {
            SamplingMode::Partition => "partition",
            SamplingMode::Overlapping => "overlapping",
        },
        spectrum_len: s.spectrum_len(),
        bands: s
            .bands()
            .into_iter()
            .map(|b| BandView { layer: b.layer, start: b.start, end: b.end })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct AutocorrView {
    /// `scores[tau - 1]` for `tau = 1..=N`.
    pub scores: Vec<f64>,
    pub top: Vec<usize>,
}

pub fn autocorr_view(series: &[f64], k: usize) -> Result<AutocorrView> {
    let profile = cross_correlation_fft(series, series)?;
    Ok(AutocorrView {
        top: profile.top_lags(k),
        scores: profile.scores().to_vec(),
    })
}

#[derive(Debug, Serialize)]
pub struct HeadView {
    pub lags: Vec<usize>,
    pub weights: Vec<f64>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct DelayView {
    pub band: BandView,
    pub k: usize,
    pub heads: Vec<HeadView>,
}

const DEMO_DIM: usize = 8;
const DEMO_HEADS: usize = 2;

/// Delay weights of one frequency-domain attention layer with identity
/// projections, applied to a length-`n` sequence whose rows repeat a random
/// motif of `period` vectors plus Gaussian-like `noise`.
pub fn delay_view(
    period: usize,
    n: usize,
    alpha: f64,
    layer: usize,
    num_layers: usize,
    topk_scale: f64,
    noise: f64,
    seed: u64,
) -> Result<DelayView> {
    if period == 0 || n < 2 {
        return Err(fearec_core::Error::InvalidConfig("need period >= 1 and length >= 2".into()));
    }
    let band = RampSchedule::for_sequence(num_layers, n, alpha)?.band_for_layer(layer)?;
    let mut rng = stream(seed, &[]);
    let motif = Array2::from_shape_fn((period, DEMO_DIM), |_| rng.random_range(-1.0..1.0));
    let h = Array2::from_shape_fn((n, DEMO_DIM), |(t, j)| {
        // Sum of three uniforms: cheap, bell-shaped, unit variance.
        let jitter: f64 = (0..3).map(|_| rng.random_range(-1.0..1.0)).sum();
        motif[(t % period, j)] + noise * jitter
    });
    let k = ((topk_scale * (n as f64).ln()).floor() as usize).clamp(1, n);
    let scores = head_correlations(h.view(), h.view(), band, DEMO_HEADS)?;
    let (_, cache) = time_delay_aggregation(h.view(), h.view(), h.view(), band, DEMO_HEADS, k, None)?;
    Ok(DelayView {
        band: BandView { layer: band.layer, start: band.start, end: band.end },
        k,
        heads: cache
            .reports
            .into_iter()
            .zip(scores)
            .map(|(r, s)| HeadView { lags: r.lags, weights: r.weights, scores: s })
            .collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn ramp_bands(num_layers: usize, max_len: usize, alpha: f64) -> std::result::Result<String, JsError> {
    to_js(ramp_view(num_layers, max_len, alpha))
}

#[wasm_bindgen]
pub fn autocorrelation(series: &[f64], k: usize) -> std::result::Result<String, JsError> {
    to_js(autocorr_view(series, k))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn delay_weights(
    period: usize,
    n: usize,
    alpha: f64,
    layer: usize,
    num_layers: usize,
    topk_scale: f64,
    noise: f64,
    seed: u64,
) -> std::result::Result<String, JsError> {
    to_js(delay_view(period, n, alpha, layer, num_layers, topk_scale, noise, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_view_lists_one_band_per_layer() {
        let v = ramp_view(4, 50, 0.25).unwrap();
        assert_eq!(v.mode, "partition");
        assert_eq!(v.bands.len(), 4);
        assert_eq!(v.spectrum_len, 26);
    }

    #[test]
    fn autocorr_of_periodic_series_prefers_its_period() {
        let x: Vec<f64> = (0..30).map(|t| [2.0, -1.0, 0.0][t % 3]).collect();
        let v = autocorr_view(&x, 3).unwrap();
        assert!(v.top.iter().all(|t| t % 3 == 0));
        assert!(autocorr_view(&[], 3).is_err());
    }

    #[test]
    fn clean_motif_puts_all_delay_weight_on_multiples_of_the_period() {
        let v = delay_view(5, 50, 1.0, 1, 1, 1.0, 0.0, 3).unwrap();
        for h in &v.heads {
            assert!(h.lags.iter().all(|t| t % 5 == 0), "{:?}", h.lags);
            assert!((h.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(delay_view(5, 50, 1.0, 3, 2, 1.0, 0.0, 3).is_err());
    }
}
