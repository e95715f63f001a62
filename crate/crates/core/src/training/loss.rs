//! Loss terms with their analytic gradients.

use ndarray::{concatenate, s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::ops::softmax_in_place;
use crate::error::{Error, Result};
use crate::spectral;

/// Multipliers of the contrastive (`lambda1`) and frequency (`lambda2`)
/// regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Whether any auxiliary view (second dropout pass, semantic positive)
    /// is needed at all.
    pub fn needs_views(&self) -> bool {
        self.lambda1 > 0.0 || self.lambda2 > 0.0
    }
}

/// Per-term losses of a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub cl: f64,
    pub freg: f64,
    pub total: f64,
}

/// `-log softmax(logits)[target]`. Logits of `-inf` (the padding id) drop
/// out of the normalizer.
pub fn rec_loss(logits: ArrayView1<'_, f64>, target: usize) -> Result<f64> {
    rec_loss_grad(logits, target).map(|(l, _)| l)
}

/// [`rec_loss`] and its gradient with respect to the logits.
pub fn rec_loss_grad(logits: ArrayView1<'_, f64>, target: usize) -> Result<(f64, Vec<f64>)> {
    if target == 0 {
        return Err(Error::PaddingTarget);
    }
    if target >= logits.len() {
        return Err(Error::ItemOutOfRange {
            id: target,
            max: logits.len().saturating_sub(1),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_norm = max + sum.ln();
    let loss = log_norm - logits[target];
    let mut grad: Vec<f64> = logits.iter().map(|&z| (z - log_norm).exp()).collect();
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// Symmetric in-batch InfoNCE with dot-product similarity.
///
/// `h_u` and `h_us` are `[B x D]`; row `b` of each forms a positive pair.
/// Each of the `2B` views is an anchor whose normalizer runs over every
/// other view (its positive and the `2B - 2` negatives). The per-anchor
/// losses are summed and divided by `B`, i.e. both directions of every pair
/// averaged over pairs.
pub fn contrastive_loss(h_u: ArrayView2<'_, f64>, h_us: ArrayView2<'_, f64>, temperature: f64) -> Result<f64> {
    contrastive_loss_grad(h_u, h_us, temperature).map(|(l, _, _)| l)
}

/// [`contrastive_loss`] with gradients for `h_u` and `h_us`.
pub fn contrastive_loss_grad(
    h_u: ArrayView2<'_, f64>,
    h_us: ArrayView2<'_, f64>,
    temperature: f64,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if h_u.dim() != h_us.dim() {
        return Err(Error::ShapeMismatch(format!("views {:?} vs {:?}", h_u.dim(), h_us.dim())));
    }
    let b = h_u.nrows();
    if b < 2 {
        return Err(Error::NoNegatives(b));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature {temperature} must be > 0")));
    }
    let z = concatenate(Axis(0), &[h_u, h_us]).expect("equal widths");
    let sim = z.dot(&z.t()) / temperature;
    let n = 2 * b;
    let mut loss = 0.0;
    let mut dsim = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let pos = (i + b) % n;
        let mut row: Vec<f64> = (0..n)
            .map(|j| if j == i { f64::NEG_INFINITY } else { sim[(i, j)] })
            .collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - sim[(i, pos)];
        softmax_in_place(&mut row);
        for (j, p) in row.into_iter().enumerate() {
            dsim[(i, j)] = p / b as f64;
        }
        dsim[(i, pos)] -= 1.0 / b as f64;
    }
    let dz = (&dsim + &dsim.t()).dot(&z) / temperature;
    Ok((
        loss / b as f64,
        dz.slice(s![..b, ..]).to_owned(),
        dz.slice(s![b.., ..]).to_owned(),
    ))
}

/// `sum_k |F(a)_k - F(b)_k|` over the half-spectrum along the feature axis.
pub fn freq_reg_loss(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    freq_reg_loss_grad(a, b).map(|(l, _)| l)
}

/// [`freq_reg_loss`] and its gradient with respect to `a` (the gradient for
/// `b` is the negation). Bins with zero modulus contribute a zero
/// subgradient.
pub fn freq_reg_loss_grad(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let spec = spectral::rfft(&diff)?;
    let d = diff.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; d];
    for (k, c) in spec.coeffs().iter().enumerate() {
        let modulus = c.norm();
        loss += modulus;
        if modulus == 0.0 {
            continue;
        }
        // d|X_k|/dx_n = (Re X_k cos(theta) - Im X_k sin(theta)) / |X_k|, theta = 2 pi n k / d
        for (n, g) in grad.iter_mut().enumerate() {
            let theta = 2.0 * std::f64::consts::PI * ((n * k) % d) as f64 / d as f64;
            *g += (c.re * theta.cos() - c.im * theta.sin()) / modulus;
        }
    }
    Ok((loss, grad))
}

/// `rec + lambda1 * cl + lambda2 * freg`, refusing non-finite inputs.
pub fn total_loss(rec: f64, cl: f64, freg: f64, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("rec_loss", rec), ("cl_loss", cl), ("freg_loss", freg)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    Ok(rec + w.lambda1 * cl + w.lambda2 * freg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array1};

    #[test]
    fn rec_loss_uniform_and_margin() {
        let mut uniform = Array1::zeros(11);
        uniform[0] = f64::NEG_INFINITY;
        assert!((rec_loss(uniform.view(), 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mut sharp = Array1::zeros(11);
        sharp[0] = f64::NEG_INFINITY;
        sharp[4] = 20.0;
        assert!(rec_loss(sharp.view(), 4).unwrap() < 1e-3);
        assert!(matches!(rec_loss(sharp.view(), 0), Err(Error::PaddingTarget)));
    }

    #[test]
    fn rec_grad_sums_to_zero_and_ignores_padding() {
        let logits = arr1(&[f64::NEG_INFINITY, 0.3, -1.2, 2.0]);
        let (_, g) = rec_loss_grad(logits.view(), 2).unwrap();
        assert_eq!(g[0], 0.0);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn contrastive_identical_views() {
        let v = arr2(&[[1.0, 0.0], [1.0, 0.0]]);
        let l = contrastive_loss(v.view(), v.view(), 1.0).unwrap();
        assert!((l - 2.0 * 3f64.ln()).abs() < 1e-12);
        let one = arr2(&[[1.0, 0.0]]);
        assert!(matches!(contrastive_loss(one.view(), one.view(), 1.0), Err(Error::NoNegatives(1))));
    }

    #[test]
    fn freq_reg_impulse() {
        let a = arr1(&[1.0, 0.0, 0.0, 0.0]);
        let b = arr1(&[0.0; 4]);
        assert!((freq_reg_loss(a.view(), b.view()).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(freq_reg_loss(a.view(), a.view()).unwrap(), 0.0);
    }

    #[test]
    fn total_is_linear_and_guards_nan() {
        let w = LossWeights { lambda1: 0.1, lambda2: 0.01 };
        assert!((total_loss(1.0, 2.0, 3.0, &w).unwrap() - 1.23).abs() < 1e-12);
        assert!(matches!(total_loss(f64::NAN, 0.0, 0.0, &w), Err(Error::NonFinite(_))));
    }
}
