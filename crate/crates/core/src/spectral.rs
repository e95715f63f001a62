//! Real-input FFT, half-spectrum handling and circular correlation.
//!
//! Conventions used across the crate:
//!
//! * forward transform `X_k = sum_n x_n exp(-2 pi i n k / N)`, unnormalized;
//! * inverse transform carries the `1/N` factor;
//! * a real series of length `N` is represented by its first `N/2 + 1`
//!   coefficients (the rest follow from conjugate symmetry);
//! * correlation is circular: `r(tau) = sum_n q_n k_{(n - tau) mod N}`, with
//!   no `1/N` normalization.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Tolerance on the imaginary part left over by an inverse transform.
pub const IMAG_TOLERANCE: f64 = 1e-9;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Number of coefficients kept for a real series of length `n`.
#[inline]
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// The non-redundant half of the spectrum of a real series.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum {
    coeffs: Vec<Complex64>,
    origin_len: usize,
}

impl HalfSpectrum {
    pub fn new(coeffs: Vec<Complex64>, origin_len: usize) -> Result<Self> {
        if origin_len == 0 {
            return Err(Error::EmptySeries);
        }
        if coeffs.len() != half_len(origin_len) {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for a series of length {} (expected {})",
                coeffs.len(),
                origin_len,
                half_len(origin_len)
            )));
        }
        Ok(Self { coeffs, origin_len })
    }

    /// Builds a spectrum without checking the coefficient count; `irfft`
    /// re-validates it.
    pub fn from_raw(coeffs: Vec<Complex64>, origin_len: usize) -> Self {
        Self { coeffs, origin_len }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn origin_len(&self) -> usize {
        self.origin_len
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }
}

/// Circular correlation scores indexed by lag `tau` in `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    scores: Vec<f64>,
}

impl CorrelationProfile {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        Self { scores }
    }

    /// Scores stored at position `tau - 1`.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn at_lag(&self, tau: usize) -> Option<f64> {
        tau.checked_sub(1).and_then(|i| self.scores.get(i).copied())
    }

    /// The `k` lags with the largest scores, best first. Ties go to the
    /// smaller lag.
    pub fn top_lags(&self, k: usize) -> Vec<usize> {
        top_k_lags(&self.scores, k)
    }
}

/// Lags (1-based) of the `k` largest entries of `scores`, best first; ties
/// resolve to the smaller lag.
pub fn top_k_lags(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k.min(scores.len()));
    order.into_iter().map(|i| i + 1).collect()
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("series".into()))
    }
}

/// Forward real FFT returning the `N/2 + 1` leading coefficients.
pub fn rfft(x: &[f64]) -> Result<HalfSpectrum> {
    if x.is_empty() {
        return Err(Error::EmptySeries);
    }
    check_finite(x)?;
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward_plan(n).process(&mut buf);
    buf.truncate(half_len(n));
    Ok(HalfSpectrum {
        coeffs: buf,
        origin_len: n,
    })
}

/// Inverse of [`rfft`]. Fails when the coefficient count does not match the
/// origin length, or when the spectrum is not the spectrum of a real series
/// (imaginary DC or Nyquist terms).
pub fn irfft(s: &HalfSpectrum) -> Result<Vec<f64>> {
    let n = s.origin_len;
    if n == 0 {
        return Err(Error::EmptySeries);
    }
    if s.coeffs.len() != half_len(n) {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for a series of length {} (expected {})",
            s.coeffs.len(),
            n,
            half_len(n)
        )));
    }
    let mut full = hermitian_extend(&s.coeffs, n);
    inverse_plan(n).process(&mut full);
    let scale = 1.0 / n as f64;
    let mut residue = 0.0f64;
    let mut peak = 1.0f64;
    let out: Vec<f64> = full
        .iter()
        .map(|c| {
            residue = residue.max((c.im * scale).abs());
            peak = peak.max((c.re * scale).abs());
            c.re * scale
        })
        .collect();
    if residue > IMAG_TOLERANCE * peak {
        return Err(Error::NonSymmetricSpectrum { residue });
    }
    Ok(out)
}

fn hermitian_extend(half: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    full[..half.len()].copy_from_slice(half);
    for k in half.len()..n {
        full[k] = half[n - k].conj();
    }
    full
}

/// Circular cross-correlation through the spectrum:
/// `IDFT(DFT(q) * conj(DFT(k)))`, O(N log N).
pub fn cross_correlation_fft(q: &[f64], k: &[f64]) -> Result<CorrelationProfile> {
    if q.len() != k.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: k.len(),
        });
    }
    let qs = rfft(q)?;
    let ks = rfft(k)?;
    let prod: Vec<Complex64> = qs
        .coeffs
        .iter()
        .zip(&ks.coeffs)
        .map(|(a, b)| a * b.conj())
        .collect();
    let r = irfft(&HalfSpectrum::from_raw(prod, q.len()))?;
    Ok(CorrelationProfile {
        scores: lag_order(&r),
    })
}

/// Reorders a zero-based circular correlation `r[0..N)` into lag order
/// `tau = 1..=N` (lag `N` is index 0).
pub(crate) fn lag_order(r: &[f64]) -> Vec<f64> {
    let n = r.len();
    (1..=n).map(|tau| r[tau % n]).collect()
}

/// Direct O(N^2) circular sum; reference for [`cross_correlation_fft`].
pub fn brute_cross_correlation(q: &[f64], k: &[f64]) -> Result<CorrelationProfile> {
    if q.len() != k.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: k.len(),
        });
    }
    if q.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = q.len();
    let scores = (1..=n)
        .map(|tau| {
            (0..n)
                .map(|i| q[i] * k[(i + n - tau % n) % n])
                .sum::<f64>()
        })
        .collect();
    Ok(CorrelationProfile { scores })
}

/// Column-wise [`rfft`] of an `[N x D]` matrix, giving `[N/2+1 x D]`.
pub fn rfft_columns(x: ArrayView2<'_, f64>) -> Array2<Complex64> {
    let (n, d) = x.dim();
    let m = half_len(n);
    let plan = forward_plan(n);
    let mut out = Array2::zeros((m, d));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for j in 0..d {
        for (b, &v) in buf.iter_mut().zip(x.column(j)) {
            *b = Complex64::new(v, 0.0);
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for (o, b) in out.column_mut(j).iter_mut().zip(&buf) {
            *o = *b;
        }
    }
    out
}

/// Column-wise inverse of [`rfft_columns`]. Imaginary parts of the DC and
/// Nyquist rows are ignored.
pub fn irfft_columns(s: ArrayView2<'_, Complex64>, n: usize) -> Result<Array2<f64>> {
    let (m, d) = s.dim();
    if m != half_len(n) {
        return Err(Error::ShapeMismatch(format!(
            "{m} spectrum rows for series length {n}"
        )));
    }
    let plan = inverse_plan(n);
    let scale = 1.0 / n as f64;
    let mut out = Array2::zeros((n, d));
    let mut full = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    for j in 0..d {
        for (k, c) in s.column(j).iter().enumerate() {
            full[k] = *c;
        }
        full[0].im = 0.0;
        if n % 2 == 0 {
            full[n / 2].im = 0.0;
        }
        for k in m..n {
            full[k] = full[n - k].conj();
        }
        plan.process_with_scratch(&mut full, &mut scratch);
        for (o, c) in out.column_mut(j).iter_mut().zip(&full) {
            *o = c.re * scale;
        }
    }
    Ok(out)
}

/// Reference transforms evaluated straight from the defining sums. Used as
/// oracles by the test suites and the `check` command.
pub mod oracle {
    use num_complex::Complex64;
    use std::f64::consts::PI;

    /// Full O(N^2) DFT.
    pub fn dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, &v)| {
                        let ang = -2.0 * PI * ((t * k) % n) as f64 / n as f64;
                        Complex64::new(v * ang.cos(), v * ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    /// O(N^2) inverse of a half spectrum, real part only.
    pub fn idft_half(half: &[Complex64], n: usize) -> Vec<f64> {
        let full: Vec<Complex64> = (0..n)
            .map(|k| {
                if k < half.len() {
                    half[k]
                } else {
                    half[n - k].conj()
                }
            })
            .collect();
        (0..n)
            .map(|t| {
                full.iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let ang = 2.0 * PI * ((t * k) % n) as f64 / n as f64;
                        (c * Complex64::new(ang.cos(), ang.sin())).re
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    }
}
