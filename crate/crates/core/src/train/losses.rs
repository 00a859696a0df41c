//! MixUp and the loss primitives shared by every training principle.
//!
//! Loss values accumulate in f64 regardless of the model precision; gradient
//! arrays stay in the model's scalar type.

use crate::error::{Result, SedError};
use crate::model::Real;
use ndarray::{Array, Dimension};
use serde::Serialize;

const BCE_EPS: f64 = 1e-7;

/// Elementwise lambda * a + (1 - lambda) * b. Applies to spectrograms, label
/// vectors, label grids and prediction grids alike.
pub fn mix<F: Real, D: Dimension>(
    a: &Array<F, D>,
    b: &Array<F, D>,
    lambda: F,
) -> Result<Array<F, D>> {
    if a.shape() != b.shape() {
        return Err(SedError::Shape(format!(
            "mix of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let one_minus = F::one() - lambda;
    Ok(ndarray::Zip::from(a)
        .and(b)
        .map_collect(|&x, &y| x * lambda + y * one_minus))
}

/// Mean binary cross-entropy; predictions are clamped away from {0, 1} before
/// the logs. Empty input scores zero.
pub fn bce_mean<F: Real, D: Dimension>(pred: &Array<F, D>, target: &Array<F, D>) -> f64 {
    debug_assert_eq!(pred.shape(), target.shape());
    if pred.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0f64;
    for (p, y) in pred.iter().zip(target.iter()) {
        let p = p.as_f64().clamp(BCE_EPS, 1.0 - BCE_EPS);
        let y = y.as_f64();
        acc -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    acc / pred.len() as f64
}

/// Gradient of `scale * bce_mean` with respect to the predictions. The
/// denominator clamp keeps saturated sigmoid outputs from producing
/// non-finite values; multiplied by the sigmoid derivative downstream it
/// reduces to the stable (p - y) form.
pub fn bce_grad<F: Real, D: Dimension>(
    pred: &Array<F, D>,
    target: &Array<F, D>,
    scale: f64,
) -> Array<F, D> {
    let n = pred.len().max(1) as f64;
    let k = scale / n;
    ndarray::Zip::from(pred)
        .and(target)
        .map_collect(|&p, &y| {
            let pf = p.as_f64();
            let denom = (pf * (1.0 - pf)).max(BCE_EPS * BCE_EPS);
            F::of(k * (pf - y.as_f64()) / denom)
        })
}

/// Mean squared error over all elements. Empty input scores zero.
pub fn mse_mean<F: Real, D: Dimension>(pred: &Array<F, D>, target: &Array<F, D>) -> f64 {
    debug_assert_eq!(pred.shape(), target.shape());
    if pred.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0f64;
    for (p, y) in pred.iter().zip(target.iter()) {
        let d = p.as_f64() - y.as_f64();
        acc += d * d;
    }
    acc / pred.len() as f64
}

/// Gradient of `scale * mse_mean` with respect to the predictions.
pub fn mse_grad<F: Real, D: Dimension>(
    pred: &Array<F, D>,
    target: &Array<F, D>,
    scale: f64,
) -> Array<F, D> {
    let n = pred.len().max(1) as f64;
    let k = 2.0 * scale / n;
    ndarray::Zip::from(pred)
        .and(target)
        .map_collect(|&p, &y| F::of(k * (p.as_f64() - y.as_f64())))
}

/// The four loss terms of one batch plus the mixing coefficient and
/// consistency weight that produced them.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossBundle {
    pub l_w: f64,
    pub l_s: f64,
    pub l_cw: f64,
    pub l_cs: f64,
    pub lambda: f64,
    pub w_t: f64,
    pub total: f64,
}

impl LossBundle {
    pub fn compose(l_w: f64, l_s: f64, l_cw: f64, l_cs: f64, lambda: f64, w_t: f64) -> Self {
        LossBundle {
            l_w,
            l_s,
            l_cw,
            l_cs,
            lambda,
            w_t,
            total: l_w + l_s + w_t * (l_cw + l_cs),
        }
    }
}

/// w(t) = w_max * exp(-5 (1 - min(t/T, 1))^2): monotone nondecreasing ramp
/// capped exactly at w_max from `ramp_steps` onward.
pub fn consistency_weight(step: u64, w_max: f64, ramp_steps: u64) -> f64 {
    if step >= ramp_steps {
        return w_max;
    }
    let t = step as f64 / ramp_steps as f64;
    w_max * (-5.0 * (1.0 - t) * (1.0 - t)).exp()
}

/// One Beta(alpha, alpha) draw, clamped strictly inside (0, 1).
pub fn sample_lambda<R: rand::Rng>(alpha: f64, rng: &mut R) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(SedError::InvalidInput(format!(
            "beta parameter must be positive, got {alpha}"
        )));
    }
    let beta = rand_distr::Beta::new(alpha, alpha)
        .map_err(|e| SedError::InvalidInput(format!("beta({alpha}) invalid: {e}")))?;
    let draw: f64 = rand_distr::Distribution::sample(&beta, rng);
    Ok(draw.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::{arr1, arr2, Array1};

    #[test]
    fn mix_endpoints_and_midpoint() {
        let a = arr1(&[2.0f64, 2.0]);
        let b = arr1(&[4.0f64, 4.0]);
        assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mix(&a, &b, 0.0).unwrap(), b);
        assert_eq!(mix(&a, &b, 0.5).unwrap(), arr1(&[3.0, 3.0]));
        let bad = arr1(&[1.0f64]);
        assert!(mix(&a, &bad, 0.5).is_err());
    }

    #[test]
    fn bce_of_target_with_itself_is_entropy() {
        let t = arr2(&[[0.3f64, 0.9], [0.5, 0.1]]);
        let expected: f64 = t
            .iter()
            .map(|&p| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
            .sum::<f64>()
            / 4.0;
        assert!((bce_mean(&t, &t) - expected).abs() < 1e-12);
    }

    #[test]
    fn bce_grad_matches_finite_difference() {
        let mut pred = arr1(&[0.3f64, 0.8, 0.51]);
        let target = arr1(&[1.0f64, 0.25, 0.5]);
        let g = bce_grad(&pred, &target, 1.0);
        let h = 1e-7;
        for i in 0..3 {
            let orig = pred[i];
            pred[i] = orig + h;
            let up = bce_mean(&pred, &target);
            pred[i] = orig - h;
            let dn = bce_mean(&pred, &target);
            pred[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5, "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn mse_grad_matches_finite_difference() {
        let mut pred = arr1(&[0.3f64, 0.8]);
        let target = arr1(&[0.1f64, 0.9]);
        let g = mse_grad(&pred, &target, 2.0);
        let h = 1e-7;
        for i in 0..2 {
            let orig = pred[i];
            pred[i] = orig + h;
            let up = 2.0 * mse_mean(&pred, &target);
            pred[i] = orig - h;
            let dn = 2.0 * mse_mean(&pred, &target);
            pred[i] = orig;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_losses_are_zero() {
        let e = Array1::<f64>::zeros(0);
        assert_eq!(bce_mean(&e, &e), 0.0);
        assert_eq!(mse_mean(&e, &e), 0.0);
    }

    #[test]
    fn bundle_total_identity() {
        let b = LossBundle::compose(0.4, 0.3, 0.2, 0.1, 0.7, 2.0);
        assert_eq!(b.total, 0.4 + 0.3 + 2.0 * (0.2 + 0.1));
    }

    #[test]
    fn ramp_fixed_points_and_monotonicity() {
        let w_max = 3.0;
        let ramp = 1000u64;
        let w0 = consistency_weight(0, w_max, ramp);
        assert!((w0 - w_max * (-5.0f64).exp()).abs() < 1e-9 * w_max);
        assert_eq!(consistency_weight(ramp, w_max, ramp), w_max);
        assert_eq!(consistency_weight(ramp + 500, w_max, ramp), w_max);
        assert_eq!(consistency_weight(0, 0.0, ramp), 0.0);
        assert_eq!(consistency_weight(5, 2.0, 0), 2.0);
        let mut prev = -1.0;
        for s in 0..=1200 {
            let w = consistency_weight(s, w_max, ramp);
            assert!(w >= prev, "step {s}");
            prev = w;
        }
    }

    #[test]
    fn lambda_draws_uniform_under_alpha_one() {
        let mut rng = stream(42, "lambda-test", 0);
        let n = 100_000usize;
        let mut draws: Vec<f64> = (0..n)
            .map(|_| sample_lambda(1.0, &mut rng).unwrap())
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(draws.iter().all(|&l| 0.0 < l && l < 1.0));
        // Kolmogorov-Smirnov distance against Uniform(0,1).
        let mut d = 0.0f64;
        for (i, &x) in draws.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((x - lo).abs()).max((hi - x).abs());
        }
        assert!(d < 0.01, "KS distance {d}");
    }

    #[test]
    fn lambda_deterministic_and_validated() {
        let a = sample_lambda(1.0, &mut stream(7, "l", 3)).unwrap();
        let b = sample_lambda(1.0, &mut stream(7, "l", 3)).unwrap();
        assert_eq!(a, b);
        assert!(sample_lambda(0.0, &mut stream(7, "l", 4)).is_err());
        assert!(sample_lambda(-1.0, &mut stream(7, "l", 5)).is_err());
    }
}
