//! Quantile regression (pinball) and Huber quantile losses.
//!
//! The error is `u = target - prediction`: positive when the prediction
//! underestimates. The indicator `1{u <= 0}` counts `u = 0` as overestimation.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Huber threshold used when none is configured.
pub const DEFAULT_KAPPA: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Width of the quadratic region; `0` selects the pure pinball loss.
    pub kappa: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { kappa: DEFAULT_KAPPA }
    }
}

impl LossConfig {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::domain(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { kappa })
    }

    pub fn loss(&self, u: f64, tau: f64) -> f64 {
        if self.kappa == 0.0 {
            qr_loss(u, tau)
        } else {
            huber_qr_loss(u, tau, self.kappa)
        }
    }

    pub fn grad(&self, u: f64, tau: f64) -> f64 {
        qr_loss_grad(u, tau, self.kappa)
    }
}

#[inline]
fn indicator(u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `rho_tau(u) = (tau - 1{u <= 0}) * u`.
#[inline]
pub fn qr_loss(u: f64, tau: f64) -> f64 {
    (tau - indicator(u)) * u
}

/// Pinball loss smoothed to a quadratic on `|u| <= kappa`.
#[inline]
pub fn huber_qr_loss(u: f64, tau: f64, kappa: f64) -> f64 {
    let w = (tau - indicator(u)).abs();
    if u.abs() <= kappa {
        w * u * u / (2.0 * kappa)
    } else {
        w * (u.abs() - 0.5 * kappa)
    }
}

/// Derivative of the (Huber) quantile loss with respect to `u`.
///
/// With `kappa = 0` this is the pinball subgradient `tau - 1{u <= 0}`, which
/// takes the value `tau - 1` at `u = 0`.
#[inline]
pub fn qr_loss_grad(u: f64, tau: f64, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return tau - indicator(u);
    }
    let w = (tau - indicator(u)).abs();
    if u.abs() <= kappa {
        w * u / kappa
    } else {
        w * u.signum()
    }
}

/// Mean over the batch of the per-row sum of quantile losses, together with
/// its gradient with respect to `pred`.
pub fn batch_quantile_loss(pred: &Tensor, target: &Tensor, tau: &Tensor, cfg: LossConfig) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() || pred.shape() != tau.shape() || pred.rank() != 2 {
        return Err(Error::domain(format!(
            "loss shapes differ: pred {:?}, target {:?}, tau {:?}",
            pred.shape(),
            target.shape(),
            tau.shape()
        )));
    }
    if let Some(t) = tau.data().iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::domain(format!("tau {t} outside [0, 1]")));
    }
    let batch = pred.rows().max(1) as f64;
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut total = 0.0;
    for (((p, y), t), g) in pred.data().iter().zip(target.data()).zip(tau.data()).zip(grad.data_mut()) {
        let u = y - p;
        total += cfg.loss(u, *t);
        *g = -cfg.grad(u, *t) / batch;
    }
    Ok((total / batch, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{AnalyticDist, Rng};
    use proptest::prelude::*;

    #[test]
    fn pinball_values() {
        assert_eq!(qr_loss(0.0, 0.3), 0.0);
        assert_eq!(qr_loss(1.0, 0.5), 0.5);
        assert_eq!(qr_loss(-1.0, 0.5), 0.5);
        assert!((qr_loss(-1.0, 0.9) - 0.1).abs() < 1e-15);
        assert_eq!(qr_loss(1.0, 0.9), 0.9);
    }

    #[test]
    fn huber_values() {
        assert!((huber_qr_loss(0.5, 0.7, 1.0) - 0.0875).abs() < 1e-15);
        assert!((huber_qr_loss(-2.0, 0.7, 1.0) - 0.45).abs() < 1e-15);
        assert_eq!(huber_qr_loss(0.0, 0.4, 0.3), 0.0);
    }

    #[test]
    fn grad_values() {
        assert_eq!(qr_loss_grad(1.0, 0.3, 0.0), 0.3);
        assert_eq!(qr_loss_grad(0.0, 0.3, 0.0), 0.3 - 1.0);
        assert_eq!(qr_loss_grad(0.0, 0.8, 1.0), 0.0);
        assert!((qr_loss_grad(-2.0, 0.7, 1.0) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn batch_values() {
        let z = Tensor::zeros(vec![2, 3]);
        let t = Tensor::filled(vec![2, 3], 0.4);
        let (l, g) = batch_quantile_loss(&z, &z, &t, LossConfig::default()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));

        let pred = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let target = Tensor::new(vec![1, 1], vec![0.5]).unwrap();
        let tau = Tensor::new(vec![1, 1], vec![0.7]).unwrap();
        let (l, g) = batch_quantile_loss(&pred, &target, &tau, LossConfig::new(1.0).unwrap()).unwrap();
        assert!((l - 0.0875).abs() < 1e-15);
        assert!((g.data()[0] + 0.35).abs() < 1e-15);
    }

    #[test]
    fn batch_duplication_keeps_mean() {
        let pred = Tensor::new(vec![2, 2], vec![0.1, -0.3, 2.0, 0.5]).unwrap();
        let target = Tensor::new(vec![2, 2], vec![0.0, 0.4, 1.0, 0.5]).unwrap();
        let tau = Tensor::new(vec![2, 2], vec![0.2, 0.9, 0.5, 0.1]).unwrap();
        let dup = |t: &Tensor| {
            let mut d = t.data().to_vec();
            d.extend_from_slice(t.data());
            Tensor::new(vec![4, 2], d).unwrap()
        };
        let cfg = LossConfig::default();
        let (a, _) = batch_quantile_loss(&pred, &target, &tau, cfg).unwrap();
        let (b, _) = batch_quantile_loss(&dup(&pred), &dup(&target), &dup(&tau), cfg).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn batch_rejects_bad_inputs() {
        let a = Tensor::zeros(vec![2, 2]);
        let b = Tensor::zeros(vec![2, 3]);
        assert!(batch_quantile_loss(&a, &a, &b, LossConfig::default()).is_err());
        let bad_tau = Tensor::filled(vec![2, 2], 1.5);
        assert!(batch_quantile_loss(&a, &a, &bad_tau, LossConfig::default()).is_err());
        assert!(LossConfig::new(-1.0).is_err());
        assert!(LossConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn empirical_median_minimizes_pinball() {
        let sample = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (best, _) = (0..=600)
            .map(|k| {
                let q = k as f64 * 0.01;
                let l = sample.iter().map(|z| qr_loss(z - q, 0.5)).sum::<f64>() / 5.0;
                (q, l)
            })
            .fold((f64::NAN, f64::INFINITY), |acc, (q, l)| if l < acc.1 { (q, l) } else { acc });
        assert!((best - 3.0).abs() < 1e-9, "minimizer {best}");
    }

    #[test]
    fn monte_carlo_minimizer_is_gaussian_quantile() {
        let mut rng = Rng::new(2024);
        let mut z: Vec<f64> = (0..1_000_000).map(|_| rng.normal()).collect();
        z.sort_by(f64::total_cmp);
        // Mean pinball loss at q via prefix sums over the sorted sample.
        let mut prefix = vec![0.0; z.len() + 1];
        for (i, v) in z.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v;
        }
        let total = prefix[z.len()];
        let m = z.len() as f64;
        let tau = 0.9;
        let mean_loss = |q: f64| {
            let k = z.partition_point(|&v| v <= q);
            let below = prefix[k] - q * k as f64; // sum of (z - q) over z <= q
            let above = (total - prefix[k]) - q * (z.len() - k) as f64;
            ((tau - 1.0) * below + tau * above) / m
        };
        let (best, _) = (0..=3000)
            .map(|k| -3.0 + k as f64 * 0.002)
            .map(|q| (q, mean_loss(q)))
            .fold((f64::NAN, f64::INFINITY), |acc, (q, l)| if l < acc.1 { (q, l) } else { acc });
        let truth = AnalyticDist::standard_normal().quantile(0.9).unwrap();
        assert!((truth - 1.281_551_565_5).abs() < 1e-9);
        assert!((best - truth).abs() < 0.02, "grid minimizer {best}");
    }

    #[test]
    fn huber_pinball_identity_on_random_points() {
        let mut rng = Rng::new(77);
        for _ in 0..10_000 {
            let u = rng.uniform_range(-5.0, 5.0);
            let tau = rng.uniform();
            let kappa = rng.uniform_range(1e-4, 2.0);
            if u.abs() < kappa {
                continue;
            }
            let w = (tau - indicator(u)).abs();
            let lhs = huber_qr_loss(u, tau, kappa);
            let rhs = qr_loss(u, tau) - w * kappa / 2.0;
            assert!((lhs - rhs).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn pinball_nonnegative_and_zero_only_at_origin(u in -100.0f64..100.0, tau in 0.001f64..0.999) {
            let l = qr_loss(u, tau);
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, u == 0.0);
            prop_assert!((l - u.abs() * (tau - indicator(u)).abs()).abs() < 1e-12);
        }

        #[test]
        fn huber_converges_to_pinball(u in -10.0f64..10.0, tau in 0.0f64..1.0) {
            let gap = (huber_qr_loss(u, tau, 1e-9) - qr_loss(u, tau)).abs();
            prop_assert!(gap <= 1e-9);
        }

        #[test]
        fn gradients_match_central_differences(
            mag in 1e-3f64..5.0,
            negative in any::<bool>(),
            tau in 0.0f64..1.0,
            kappa in 1e-3f64..2.0,
        ) {
            let u = if negative { -mag } else { mag };
            // Stay clear of the branch points |u| = kappa.
            prop_assume!((u.abs() - kappa).abs() > 1e-3);
            let h = 1e-5;
            let fd = (huber_qr_loss(u + h, tau, kappa) - huber_qr_loss(u - h, tau, kappa)) / (2.0 * h);
            let g = qr_loss_grad(u, tau, kappa);
            prop_assert!((fd - g).abs() <= 1e-8 * g.abs().max(1.0), "huber fd {} vs {}", fd, g);
            let fd0 = (qr_loss(u + h, tau) - qr_loss(u - h, tau)) / (2.0 * h);
            let g0 = qr_loss_grad(u, tau, 0.0);
            prop_assert!((fd0 - g0).abs() <= 1e-8 * g0.abs().max(1.0), "pinball fd {} vs {}", fd0, g0);
        }

        #[test]
        fn huber_is_continuously_differentiable_at_kappa(tau in 0.0f64..1.0, kappa in 1e-3f64..2.0, neg in any::<bool>()) {
            let s = if neg { -1.0 } else { 1.0 };
            let inside = s * kappa;
            let outside = s * kappa * (1.0 + 1e-12);
            prop_assert!((huber_qr_loss(inside, tau, kappa) - huber_qr_loss(outside, tau, kappa)).abs() < 1e-10);
            prop_assert!((qr_loss_grad(inside, tau, kappa) - qr_loss_grad(outside, tau, kappa)).abs() < 1e-10);
        }
    }
}
