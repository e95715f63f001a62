//! Property suites behind `fearec check`.
//!
//! Each suite returns a pass/fail verdict with a one-line detail. The
//! spectral suite takes the forward transform as a parameter so a broken
//! transform can be injected to confirm the suite notices.

use num_complex::Complex64;
use rand::Rng as _;

use crate::encoder::ModelConfig;
use crate::error::Result;
use crate::eval::{metrics_from_ranks, rank_of_target};
use crate::ramp::{RampSchedule, SamplingMode};
use crate::rng::stream;
use crate::spectral::{self, brute_cross_correlation, irfft, HalfSpectrum};
use crate::training::{grad_check, GradCheckLoss};

pub type RfftFn = fn(&[f64]) -> Result<HalfSpectrum>;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<9} {}", self.name, self.detail)
    }
}

/// Mutation fixture: the forward transform with the exponent's sign
/// flipped, i.e. the conjugate of the correct half-spectrum.
pub fn sign_flipped_rfft(x: &[f64]) -> Result<HalfSpectrum> {
    let s = spectral::rfft(x)?;
    let n = s.origin_len();
    Ok(HalfSpectrum::from_raw(s.into_coeffs().into_iter().map(|c| c.conj()).collect(), n))
}

fn correlate_with(rfft: RfftFn, q: &[f64], k: &[f64]) -> Result<Vec<f64>> {
    let (fq, fk) = (rfft(q)?, rfft(k)?);
    let prod: Vec<Complex64> = fq.coeffs().iter().zip(fk.coeffs()).map(|(a, b)| a * b.conj()).collect();
    let r = irfft(&HalfSpectrum::new(prod, q.len())?)?;
    Ok(spectral::lag_order(&r))
}

const TOL: f64 = 1e-9;

/// Round trip, oracle equivalence of circular correlation and Parseval,
/// over random series of length 1..=64.
pub fn spectral_suite(rfft: RfftFn, seed: u64) -> SuiteResult {
    let run = || -> Result<(f64, f64, f64)> {
        let mut rng = stream(seed, &[0x5BEC]);
        let (mut trip, mut corr, mut parseval) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..200 {
            let n = rng.random_range(1..=64);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = rfft(&x)?;
            let back = irfft(&s)?;
            trip = trip.max(x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let fast = correlate_with(rfft, &x, &y)?;
            let slow = brute_cross_correlation(&x, &y)?;
            corr = corr.max(fast.iter().zip(slow.scores()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let c = s.coeffs();
            let m = c.len();
            let mut spec = c[0].norm_sqr();
            for (i, v) in c.iter().enumerate().skip(1) {
                let twice = i < m - 1 || n % 2 == 1;
                spec += if twice { 2.0 } else { 1.0 } * v.norm_sqr();
            }
            parseval = parseval.max((energy - spec / n as f64).abs());
        }
        Ok((trip, corr, parseval))
    };
    match run() {
        Ok((trip, corr, parseval)) => SuiteResult {
            name: "spectral",
            passed: trip < TOL && corr < TOL && parseval < 1e-8,
            detail: format!("round-trip {trip:.2e}, correlation vs brute force {corr:.2e}, Parseval {parseval:.2e}"),
        },
        Err(e) => SuiteResult {
            name: "spectral",
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Partition bands cover `[0, M)` with overlap <= L-1; overlapping bands
/// have constant width `round(alpha M)` and non-increasing starts.
pub fn ramp_suite() -> SuiteResult {
    let mut failures = Vec::new();
    let mut checked = 0;
    for m in [13usize, 26, 64] {
        for l in [2usize, 4] {
            let part = RampSchedule::new(l, m, 1.0 / l as f64).expect("valid");
            debug_assert_eq!(part.mode(), SamplingMode::Partition);
            let bands = part.bands();
            let mut cover = vec![0usize; m];
            for b in &bands {
                (b.start..b.end).for_each(|i| cover[i] += 1);
            }
            let overlap: usize = cover.iter().map(|&c| c.saturating_sub(1)).sum();
            if cover.contains(&0) || overlap > l - 1 {
                failures.push(format!("partition M={m} L={l}"));
            }
            checked += 1;
            for alpha in [0.6, 0.8] {
                let s = RampSchedule::new(l, m, alpha).expect("valid");
                let bands = s.bands();
                let width = ((alpha * m as f64) + 0.5).floor() as usize;
                let ok = s.mode() == SamplingMode::Overlapping
                    && bands.iter().all(|b| b.width() == width)
                    && bands.windows(2).all(|w| w[1].start <= w[0].start);
                if !ok {
                    failures.push(format!("overlapping M={m} L={l} alpha={alpha}"));
                }
                checked += 1;
            }
        }
    }
    SuiteResult {
        name: "ramp",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{checked} schedules")
        } else {
            format!("violations: {}", failures.join(", "))
        },
    }
}

/// The tiny configuration used for gradient checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        num_items: 10,
        max_len: 8,
        dim: 8,
        num_layers: 1,
        num_heads: 2,
        ..Default::default()
    }
}

pub fn gradient_suite(seed: u64) -> SuiteResult {
    let mut parts = Vec::new();
    let mut passed = true;
    for loss in [GradCheckLoss::Rec, GradCheckLoss::Freg, GradCheckLoss::Total] {
        match grad_check(&tiny_config(), loss, seed) {
            Ok(r) => {
                passed &= r.max_rel_error < 1e-3;
                parts.push(format!("{loss:?} {:.2e}", r.max_rel_error));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{loss:?} error: {e}"));
            }
        }
    }
    SuiteResult {
        name: "gradient",
        passed,
        detail: format!("max relative error: {}", parts.join(", ")),
    }
}

/// Rank and metric identities on random score vectors.
pub fn metric_suite(seed: u64) -> SuiteResult {
    let mut rng = stream(seed, &[0x3E7]);
    let mut bad = Vec::new();
    let fixed = [
        (metrics_from_ranks(&[1, 1, 1], 5).ok(), Some((1.0, 1.0))),
        (metrics_from_ranks(&[6], 5).ok(), Some((0.0, 0.0))),
    ];
    if fixed.iter().any(|(got, want)| got != want) {
        bad.push("hand-computed metrics".to_string());
    }
    let mut ranks = Vec::new();
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let mut logits: Vec<f64> = (0..=n).map(|_| (rng.random_range(0..6) as f64) * 0.5).collect();
        logits[0] = f64::NEG_INFINITY;
        let target = rng.random_range(1..=n);
        let rank = rank_of_target(&logits, target);
        let brute = 1 + (1..=n).filter(|&i| i != target && logits[i] >= logits[target]).count();
        if rank != brute || rank > n {
            bad.push(format!("rank {rank} vs {brute}"));
        }
        ranks.push(rank);
    }
    let (hr5, ndcg5) = metrics_from_ranks(&ranks, 5).unwrap_or((f64::NAN, f64::NAN));
    let (hr10, ndcg10) = metrics_from_ranks(&ranks, 10).unwrap_or((f64::NAN, f64::NAN));
    if !(0.0 <= ndcg5 && ndcg5 <= hr5 && hr5 <= hr10 && ndcg5 <= ndcg10 && ndcg10 <= hr10 && hr10 <= 1.0) {
        bad.push("metric ordering".into());
    }
    SuiteResult {
        name: "metrics",
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            "rank ties pessimistic, 0 <= NDCG <= HR <= 1, HR@5 <= HR@10".into()
        } else {
            bad.join("; ")
        },
    }
}

pub fn run_all(seed: u64) -> Vec<SuiteResult> {
    vec![
        spectral_suite(spectral::rfft, seed),
        ramp_suite(),
        gradient_suite(seed),
        metric_suite(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_on_a_correct_build() {
        for r in run_all(1) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn sign_flip_is_caught() {
        assert!(!spectral_suite(sign_flipped_rfft, 1).passed);
    }
}
