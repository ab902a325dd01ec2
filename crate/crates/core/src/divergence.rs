//! Distances between distributions: the quantile divergence, the closed-form
//! expected pinball loss, the empirical 1-Wasserstein distance and the
//! Fréchet distance between moment summaries.
//!
//! For a distribution `P` with cdf `F` and a quantile function `Q`,
//!
//! ```text
//! q(P, Q) = ∫ ∫_{F⁻¹(τ)}^{Q(τ)} (F(x) - τ) dx dτ
//! ```
//!
//! The outer integral runs over `[TAU_EPS, 1 - TAU_EPS]` since unbounded
//! quantile functions diverge at the endpoints.

use crate::error::{Error, Result};
use crate::losses::qr_loss;
use crate::numerics::linalg::{psd_sqrt, sym_eig, trace};
use crate::numerics::{integrate, AnalyticDist, Rng, Tensor};

/// Lower limit of every `tau` integral and Monte-Carlo `tau` draw.
pub const TAU_EPS: f64 = 1e-4;

/// `E_{z~P}[ρ_τ(z - q)] = ∫_{-∞}^q F(x) dx + τ (E[z] - q)`.
pub fn expected_pinball(p: &AnalyticDist, q: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau {tau} must lie in (0, 1)")));
    }
    if !q.is_finite() {
        return Err(Error::domain("q must be finite"));
    }
    let (lo, hi) = p.support();
    let partial = if q <= lo {
        0.0
    } else {
        // Past the upper support bound the cdf is 1.
        integrate(|x| p.cdf(x), lo, q.min(hi), 1e-10)? + (q - hi).max(0.0)
    };
    Ok(partial + tau * (p.mean() - q))
}

/// A quantile function `τ ↦ Q(τ)` on `(0, 1)`.
pub struct QuantileFn<'a> {
    f: Box<dyn Fn(f64) -> f64 + 'a>,
    monotone: bool,
}

impl<'a> QuantileFn<'a> {
    /// Wraps `f`. With `monotone` set, `f` must be nondecreasing on the grid
    /// `0.01, 0.02, …, 0.99`.
    pub fn new(f: impl Fn(f64) -> f64 + 'a, monotone: bool) -> Result<Self> {
        let qf = Self { f: Box::new(f), monotone };
        let grid: Vec<f64> = (1..100).map(|i| qf.eval(i as f64 / 100.0)).collect();
        if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("quantile function returned {v}")));
        }
        if monotone {
            if let Some(i) = grid.windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::domain(format!(
                    "quantile function decreases between tau={} and tau={}",
                    (i + 1) as f64 / 100.0,
                    (i + 2) as f64 / 100.0
                )));
            }
        }
        Ok(qf)
    }

    pub fn of_dist(d: &'a AnalyticDist) -> Self {
        Self { f: Box::new(move |t| d.quantile(t).expect("tau inside (0, 1)")), monotone: true }
    }

    /// Piecewise-linear interpolation of order statistics, placing the
    /// `k`-th smallest of `m` points at `τ = (k + 0.5) / m`.
    pub fn empirical(samples: &[f64]) -> Result<QuantileFn<'static>> {
        if samples.is_empty() {
            return Err(Error::domain("empirical quantile function needs samples"));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        QuantileFn::new(
            move |t| {
                let pos = (t * m as f64 - 0.5).clamp(0.0, (m - 1) as f64);
                let k = pos.floor() as usize;
                let frac = pos - k as f64;
                if k + 1 < m {
                    sorted[k] + frac * (sorted[k + 1] - sorted[k])
                } else {
                    sorted[k]
                }
            },
            true,
        )
    }

    pub fn eval(&self, tau: f64) -> f64 {
        (self.f)(tau)
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }
}

/// Quantile divergence of `q` from `p`, by nested adaptive quadrature.
pub fn quantile_divergence(p: &AnalyticDist, q: &QuantileFn<'_>, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain("tolerance must be positive"));
    }
    let inner_tol = tol * 1e-2;
    let failure = std::cell::RefCell::new(None);
    let inner = |tau: f64| -> f64 {
        let a = p.quantile(tau).expect("tau inside (0, 1)");
        let b = q.eval(tau);
        let g = |x: f64| p.cdf(x) - tau;
        let r = if b >= a { integrate(g, a, b, inner_tol) } else { integrate(g, b, a, inner_tol).map(|v| -v) };
        match r {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let total = integrate(inner, TAU_EPS, 1.0 - TAU_EPS, tol)?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(if total < 0.0 && total >= -tol { 0.0 } else { total })
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        Self { mean, std_err: (var / m).sqrt() }
    }
}

/// Expected pinball loss `∫ E_{z~P} ρ_τ(z - Q(τ)) dτ` over the truncated
/// `tau` range, estimated from `pairs` draws of `(z, τ)`. Each draw is
/// evaluated for every quantile function, so the per-function columns are
/// coupled and their differences have small variance.
pub fn expected_quantile_loss_mc(
    p: &AnalyticDist,
    qs: &[&QuantileFn<'_>],
    pairs: usize,
    rng: &mut Rng,
) -> Vec<Vec<f64>> {
    let width = 1.0 - 2.0 * TAU_EPS;
    let mut out = vec![Vec::with_capacity(pairs); qs.len()];
    for _ in 0..pairs {
        let z = p.sample(rng);
        let tau = rng.uniform_range(TAU_EPS, 1.0 - TAU_EPS);
        for (col, q) in out.iter_mut().zip(qs) {
            col.push(width * qr_loss(z - q.eval(tau), tau));
        }
    }
    out
}

/// `(1/m) Σ |a_(k) - b_(k)|` over order statistics of equal-size samples.
pub fn wasserstein1_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::domain(format!("sample sizes differ: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::domain("empty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub mean: Tensor,
    pub cov: Tensor,
    pub count: usize,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased covariance of the rows of `features`.
pub fn moment_summary(features: &Tensor) -> Result<MomentSummary> {
    if features.rank() != 2 {
        return Err(Error::domain("features must be a matrix"));
    }
    let (m, d) = (features.rows(), features.cols());
    if m < 2 {
        return Err(Error::domain(format!("need at least 2 rows, got {m}")));
    }
    let mut mean = vec![0.0; d];
    for r in 0..m {
        for (acc, v) in mean.iter_mut().zip(features.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in 0..m {
        for ((c, v), mu) in centered.iter_mut().zip(features.row(r)).zip(&mean) {
            *c = v - mu;
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[i * d + j] / (m - 1) as f64;
            cov[i * d + j] = v;
            cov[j * d + i] = v;
        }
    }
    Ok(MomentSummary { mean: Tensor::new(vec![d], mean)?, cov: Tensor::new(vec![d, d], cov)?, count: m })
}

/// `‖μ₁ - μ₂‖² + Tr(Σ₁ + Σ₂ - 2 (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})`, clamped at 0.
pub fn frechet_distance(m1: &MomentSummary, m2: &MomentSummary) -> Result<f64> {
    let d = m1.dim();
    if m2.dim() != d || m1.cov.shape() != [d, d] || m2.cov.shape() != [d, d] {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", d, m2.dim())));
    }
    if m1.mean == m2.mean && m1.cov == m2.cov {
        return Ok(0.0);
    }
    let mean_term: f64 = m1.mean.data().iter().zip(m2.mean.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let s1 = psd_sqrt(&m1.cov)?;
    let mut middle = s1.matmul(&m2.cov)?.matmul(&s1)?;
    let sym = middle.transpose();
    for (v, t) in middle.data_mut().iter_mut().zip(sym.data()) {
        *v = 0.5 * (*v + t);
    }
    let root_trace: f64 = sym_eig(&middle)?.values.iter().map(|l| l.max(0.0).sqrt()).sum();
    Ok((mean_term + trace(&m1.cov) + trace(&m2.cov) - 2.0 * root_trace).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn g01() -> AnalyticDist {
        AnalyticDist::standard_normal()
    }

    #[test]
    fn expected_pinball_examples() {
        let u = AnalyticDist::uniform(0.0, 1.0).unwrap();
        assert!((expected_pinball(&u, 0.5, 0.5).unwrap() - 0.125).abs() < 1e-10);
        // E|Z| / 2 = 1 / sqrt(2π).
        let v = expected_pinball(&g01(), 0.0, 0.5).unwrap();
        assert!((v - 0.3989422804).abs() < 1e-9);
        assert!(expected_pinball(&g01(), 0.0, 1.0).is_err());
    }

    #[test]
    fn expected_pinball_matches_monte_carlo() {
        let mut rng = Rng::new(3);
        let losses: Vec<f64> = (0..1_000_000).map(|_| qr_loss(rng.normal(), 0.5)).collect();
        let est = McEstimate::from_samples(&losses);
        assert!((est.mean - 0.3989422804).abs() < 3.0 * est.std_err);
    }

    #[test]
    fn expected_pinball_is_minimized_at_the_quantile() {
        let dists = [g01(), AnalyticDist::exponential(1.0).unwrap(), AnalyticDist::uniform(2.0, 4.0).unwrap()];
        for p in &dists {
            for tau in [0.1, 0.5, 0.8] {
                let qstar = p.quantile(tau).unwrap();
                let best = expected_pinball(p, qstar, tau).unwrap();
                for k in -20..=20 {
                    let q = qstar + k as f64 * 0.05;
                    assert!(expected_pinball(p, q, tau).unwrap() >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn divergence_of_the_truth_is_zero() {
        let p = g01();
        let q = QuantileFn::of_dist(&p);
        assert!(quantile_divergence(&p, &q, 1e-9).unwrap().abs() <= 1e-9);
    }

    /// Midpoint rule on a 2000 × 2000 grid, written without the quadrature
    /// routine.
    fn brute_force_divergence(p: &AnalyticDist, q: impl Fn(f64) -> f64) -> f64 {
        let n = 2000;
        let (t0, t1) = (TAU_EPS, 1.0 - TAU_EPS);
        let dt = (t1 - t0) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let tau = t0 + (i as f64 + 0.5) * dt;
            let a = p.quantile(tau).unwrap();
            let b = q(tau);
            let dx = (b - a) / n as f64;
            let mut inner = 0.0;
            for j in 0..n {
                let x = a + (j as f64 + 0.5) * dx;
                inner += (p.cdf(x) - tau) * dx;
            }
            total += inner * dt;
        }
        total
    }

    #[test]
    fn divergence_matches_brute_force() {
        let p = g01();
        let shifted = AnalyticDist::gaussian(0.1, 1.0).unwrap();
        let q = QuantileFn::of_dist(&shifted);
        let v = quantile_divergence(&p, &q, 1e-9).unwrap();
        let oracle = brute_force_divergence(&p, |t| shifted.quantile(t).unwrap());
        assert!(v > 0.0);
        assert!((v - oracle).abs() < 1e-5, "{v} vs {oracle}");
    }

    #[test]
    fn divergence_is_asymmetric() {
        let a = g01();
        let b = AnalyticDist::gaussian(1.0, 2.0).unwrap();
        let ab = quantile_divergence(&a, &QuantileFn::of_dist(&b), 1e-10).unwrap();
        let ba = quantile_divergence(&b, &QuantileFn::of_dist(&a), 1e-10).unwrap();
        // The gap for this pair is small but far above the quadrature tolerance.
        assert!((ab - ba).abs() > 5e-6, "{ab} vs {ba}");

        let e = AnalyticDist::exponential(1.0).unwrap();
        let ae = quantile_divergence(&a, &QuantileFn::of_dist(&e), 1e-8).unwrap();
        let ea = quantile_divergence(&e, &QuantileFn::of_dist(&a), 1e-8).unwrap();
        assert!((ae - ea).abs() > 2e-5, "{ae} vs {ea}");
    }

    /// `∫ g_τ(Q(τ)) dτ - ∫ g_τ(F⁻¹(τ)) dτ` equals the divergence.
    #[test]
    fn divergence_is_excess_expected_loss() {
        let p = g01();
        let q = |t: f64| 2.0 * t - 1.0;
        let excess = integrate(
            |t| expected_pinball(&p, q(t), t).unwrap() - expected_pinball(&p, p.quantile(t).unwrap(), t).unwrap(),
            TAU_EPS,
            1.0 - TAU_EPS,
            1e-8,
        )
        .unwrap();
        let d = quantile_divergence(&p, &QuantileFn::new(q, true).unwrap(), 1e-9).unwrap();
        assert!((excess - d).abs() < 1e-6, "{excess} vs {d}");
    }

    #[test]
    fn quantile_fn_validation() {
        assert!(QuantileFn::new(|t| -t, true).is_err());
        assert!(QuantileFn::new(|t| -t, false).is_ok());
        assert!(QuantileFn::new(|_| f64::NAN, false).is_err());
        let e = QuantileFn::empirical(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.eval(0.5), 2.0);
        assert_eq!(e.eval(0.01), 1.0);
        assert_eq!(e.eval(0.99), 3.0);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1_empirical(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1_empirical(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(wasserstein1_empirical(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
        assert!(wasserstein1_empirical(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn moment_summary_examples() {
        let t = Tensor::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let s = moment_summary(&t).unwrap();
        assert_eq!(s.mean.data(), &[1.0, 1.0]);
        assert_eq!(s.cov.data(), &[2.0, 2.0, 2.0, 2.0]);
        let c = moment_summary(&Tensor::filled(vec![5, 3], 1.5)).unwrap();
        assert!(c.cov.data().iter().all(|&v| v == 0.0));
        assert!(moment_summary(&Tensor::zeros(vec![1, 3])).is_err());
    }

    fn summary(mean: Vec<f64>, cov: Vec<f64>) -> MomentSummary {
        let d = mean.len();
        MomentSummary {
            mean: Tensor::new(vec![d], mean).unwrap(),
            cov: Tensor::new(vec![d, d], cov).unwrap(),
            count: 100,
        }
    }

    #[test]
    fn frechet_examples() {
        let a = summary(vec![0.0], vec![1.0]);
        assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(frechet_distance(&a, &summary(vec![1.0], vec![1.0])).unwrap(), 1.0);
        assert_eq!(frechet_distance(&a, &summary(vec![0.0], vec![4.0])).unwrap(), 1.0);
        assert!(frechet_distance(&a, &summary(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0])).is_err());
    }

    fn random_summary(d: usize, rng: &mut Rng) -> MomentSummary {
        let rows: Vec<Vec<f64>> = (0..d + 3).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        moment_summary(&Tensor::from_rows(&rows).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn frechet_symmetric_and_positive(seed in 0u64..1000, d in 1usize..6) {
            let mut rng = Rng::new(seed);
            let a = random_summary(d, &mut rng);
            let b = random_summary(d, &mut rng);
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
            prop_assert!(ab > 0.0);
            prop_assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn wasserstein_is_a_metric(seed in 0u64..1000, m in 1usize..40) {
            let mut rng = Rng::new(seed);
            let mut draw = || (0..m).map(|_| rng.normal()).collect::<Vec<f64>>();
            let (a, b, c) = (draw(), draw(), draw());
            prop_assert_eq!(wasserstein1_empirical(&a, &a).unwrap(), 0.0);
            let ab = wasserstein1_empirical(&a, &b).unwrap();
            let bc = wasserstein1_empirical(&b, &c).unwrap();
            let ac = wasserstein1_empirical(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((ab - wasserstein1_empirical(&b, &a).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn divergence_nonnegative(mu_p in -2.0f64..2.0, sd_p in 0.3f64..3.0, mu_q in -2.0f64..2.0, sd_q in 0.3f64..3.0) {
            let p = AnalyticDist::gaussian(mu_p, sd_p).unwrap();
            let q = AnalyticDist::gaussian(mu_q, sd_q).unwrap();
            let v = quantile_divergence(&p, &QuantileFn::of_dist(&q), 1e-7).unwrap();
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn moment_summary_is_exchangeable(seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
            let mut shuffled = rows.clone();
            rng.shuffle(&mut shuffled);
            let a = moment_summary(&Tensor::from_rows(&rows).unwrap()).unwrap();
            let b = moment_summary(&Tensor::from_rows(&shuffled).unwrap()).unwrap();
            for (x, y) in a.mean.data().iter().zip(b.mean.data()).chain(a.cov.data().iter().zip(b.cov.data())) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
