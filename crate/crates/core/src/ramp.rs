//! Frequency ramp: which slice of the half-spectrum each layer keeps.
//!
//! Bottom layers keep the high-frequency end of the spectrum and the band
//! slides toward DC as depth increases. With `alpha > 1/L` the bands
//! overlap; with `alpha <= 1/L` the spectrum is partitioned evenly.

use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, half_len};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Overlapping,
    Partition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSchedule {
    num_layers: usize,
    spectrum_len: usize,
    alpha: f64,
}

/// Half-open row range `[start, end)` of the half-spectrum kept by `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub start: usize,
    pub end: usize,
    pub layer: usize,
}

impl Band {
    pub fn width(&self) -> usize {
        self.end - self.start
    }

    /// The whole spectrum of length `m`.
    pub fn full(m: usize, layer: usize) -> Self {
        Band {
            start: 0,
            end: m,
            layer,
        }
    }

    pub fn contains(&self, row: usize) -> bool {
        (self.start..self.end).contains(&row)
    }
}

#[inline]
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

impl RampSchedule {
    pub fn new(num_layers: usize, spectrum_len: usize, alpha: f64) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::InvalidConfig("num_layers must be >= 1".into()));
        }
        if spectrum_len == 0 {
            return Err(Error::InvalidConfig("spectrum length must be >= 1".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {alpha} not in (0, 1]")));
        }
        Ok(Self {
            num_layers,
            spectrum_len,
            alpha,
        })
    }

    /// Schedule for sequences of length `max_len` (spectrum length `max_len/2+1`).
    pub fn for_sequence(num_layers: usize, max_len: usize, alpha: f64) -> Result<Self> {
        Self::new(num_layers, half_len(max_len), alpha)
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn spectrum_len(&self) -> usize {
        self.spectrum_len
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> SamplingMode {
        if self.alpha <= 1.0 / self.num_layers as f64 {
            SamplingMode::Partition
        } else {
            SamplingMode::Overlapping
        }
    }

    /// Band for layer `l` (1-based).
    pub fn band_for_layer(&self, l: usize) -> Result<Band> {
        let big_l = self.num_layers;
        if l == 0 || l > big_l {
            return Err(Error::LayerOutOfRange {
                layer: l,
                num_layers: big_l,
            });
        }
        let m = self.spectrum_len;
        let mf = m as f64;
        let (mut start, mut end) = match self.mode() {
            SamplingMode::Overlapping => {
                let width = round_half_up(self.alpha * mf).clamp(1, m);
                // big_l >= 2 here: a single layer always partitions.
                let depth = (l - 1) as f64 / (big_l - 1) as f64;
                let start = round_half_up(mf * (1.0 - self.alpha) * (1.0 - depth)).min(m - width);
                (start, start + width)
            }
            SamplingMode::Partition => {
                let lf = l as f64;
                let lbig = big_l as f64;
                let p = mf * (1.0 - lf / lbig);
                (round_half_up(p).min(m), round_half_up(p + mf / lbig).min(m))
            }
        };
        if end <= start {
            end = (start + 1).min(m);
            start = end - 1;
        }
        Ok(Band {
            start,
            end,
            layer: l,
        })
    }

    pub fn bands(&self) -> Vec<Band> {
        (1..=self.num_layers)
            .map(|l| self.band_for_layer(l).expect("layer in range"))
            .collect()
    }
}

/// Rows `band.start..band.end` of an `[M x D]` spectrum.
pub fn sample_band(spec: ArrayView2<'_, Complex64>, band: Band) -> Result<Array2<Complex64>> {
    if band.start >= band.end || band.end > spec.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "band [{}, {}) outside spectrum with {} rows",
            band.start,
            band.end,
            spec.nrows()
        )));
    }
    Ok(spec.slice(s![band.start..band.end, ..]).to_owned())
}

/// Places `sampled` at rows `band.start..band.end` of an `[M x D]` zero matrix.
pub fn zero_pad_band(
    sampled: ArrayView2<'_, Complex64>,
    band: Band,
    m: usize,
) -> Result<Array2<Complex64>> {
    if band.start >= band.end || band.end > m || sampled.nrows() != band.width() {
        return Err(Error::ShapeMismatch(format!(
            "{} sampled rows for band [{}, {}) of a {m}-row spectrum",
            sampled.nrows(),
            band.start,
            band.end
        )));
    }
    let mut out = Array2::zeros((m, sampled.ncols()));
    out.slice_mut(s![band.start..band.end, ..]).assign(&sampled);
    Ok(out)
}

/// Column-wise band-limiting of an `[N x D]` matrix along its time axis:
/// `irfft(zero_pad_band(sample_band(rfft(x))))`.
///
/// The map is linear, symmetric and idempotent, so it is materialized once
/// as an `N x N` matrix and applied by multiplication.
#[derive(Debug, Clone)]
pub struct BandFilter {
    band: Band,
    seq_len: usize,
    projection: Array2<f64>,
    identity: bool,
}

impl BandFilter {
    pub fn new(band: Band, seq_len: usize) -> Result<Self> {
        let m = half_len(seq_len);
        if band.end > m || band.start >= band.end {
            return Err(Error::ShapeMismatch(format!(
                "band [{}, {}) invalid for sequence length {seq_len}",
                band.start, band.end
            )));
        }
        let identity = band.start == 0 && band.end == m;
        let eye = Array2::<f64>::eye(seq_len);
        let projection = if identity {
            eye
        } else {
            filter_via_spectrum(eye.view(), band)?
        };
        Ok(Self {
            band,
            seq_len,
            projection,
            identity,
        })
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn projection(&self) -> ArrayView2<'_, f64> {
        self.projection.view()
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.identity {
            x.to_owned()
        } else {
            self.projection.dot(&x)
        }
    }

    /// Adjoint application, used by the backward pass.
    pub fn apply_transpose(&self, g: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.identity {
            g.to_owned()
        } else {
            self.projection.t().dot(&g)
        }
    }
}

/// The band-limiting pipeline evaluated through the FFT, column by column.
pub fn filter_via_spectrum(x: ArrayView2<'_, f64>, band: Band) -> Result<Array2<f64>> {
    let n = x.nrows();
    let spec = spectral::rfft_columns(x);
    let sampled = sample_band(spec.view(), band)?;
    let padded = zero_pad_band(sampled.view(), band, half_len(n))?;
    spectral::irfft_columns(padded.view(), n)
}
