//! Closed-form scalar distributions used as ground truth.

use std::f64::consts::{PI, SQRT_2};

use super::rng::Rng;
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticDist {
    Gaussian { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Mixture { weights: Vec<f64>, components: Vec<AnalyticDist> },
}

impl AnalyticDist {
    pub fn gaussian(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::domain(format!("gaussian needs finite mean and std > 0, got ({mean}, {std})")));
        }
        Ok(Self::Gaussian { mean, std })
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && high > low) {
            return Err(Error::domain(format!("uniform needs low < high, got ({low}, {high})")));
        }
        Ok(Self::Uniform { low, high })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("exponential needs rate > 0, got {rate}")));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<AnalyticDist>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::domain("mixture needs one weight per component"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::domain("mixture weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self::Mixture { weights, components })
    }

    pub fn standard_normal() -> Self {
        Self::Gaussian { mean: 0.0, std: 1.0 }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, std } => {
                let z = (x - mean) / std;
                INV_SQRT_2PI * (-0.5 * z * z).exp() / std
            }
            Self::Uniform { low, high } => {
                if x < *low || x > *high {
                    0.0
                } else {
                    1.0 / (high - low)
                }
            }
            Self::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Self::Mixture { weights, components } => weights.iter().zip(components).map(|(w, c)| w * c.pdf(x)).sum(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { mean, std } => std_normal_cdf((x - mean) / std),
            Self::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Self::Mixture { weights, components } => {
                weights.iter().zip(components).map(|(w, c)| w * c.cdf(x)).sum::<f64>().clamp(0.0, 1.0)
            }
        }
    }

    /// Inverse cdf on the open interval `(0, 1)`.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::domain(format!("quantile level {tau} outside (0, 1)")));
        }
        Ok(match self {
            Self::Gaussian { mean, std } => mean + std * std_normal_quantile(tau),
            Self::Uniform { low, high } => low + tau * (high - low),
            Self::Exponential { rate } => -(-tau).ln_1p() / rate,
            Self::Mixture { components, .. } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in components {
                    lo = lo.min(c.quantile(1e-12)?);
                    hi = hi.max(c.quantile(1.0 - 1e-12)?);
                }
                while hi - lo > 1e-10 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) < tau {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Gaussian { mean, .. } => *mean,
            Self::Uniform { low, high } => 0.5 * (low + high),
            Self::Exponential { rate } => 1.0 / rate,
            Self::Mixture { weights, components } => weights.iter().zip(components).map(|(w, c)| w * c.mean()).sum(),
        }
    }

    /// Finite interval carrying all but a negligible tail of the mass.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Gaussian { mean, std } => (mean - 10.0 * std, mean + 10.0 * std),
            Self::Uniform { low, high } => (*low, *high),
            Self::Exponential { rate } => (0.0, -(1e-12f64).ln() / rate),
            Self::Mixture { components, .. } => {
                components.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    let (a, b) = c.support();
                    (lo.min(a), hi.max(b))
                })
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            Self::Gaussian { mean, std } => mean + std * rng.normal(),
            Self::Uniform { low, high } => rng.uniform_range(*low, *high),
            Self::Exponential { rate } => -(-rng.uniform()).ln_1p() / rate,
            Self::Mixture { weights, components } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                components.last().expect("nonempty mixture").sample(rng)
            }
        }
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Inverse standard normal cdf: Acklam's rational approximation followed by
/// one Halley step against the erfc-based cdf.
pub fn std_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (-p).ln_1p()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let e = std_normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quad::integrate;

    fn zoo() -> Vec<AnalyticDist> {
        vec![
            AnalyticDist::gaussian(0.0, 1.0).unwrap(),
            AnalyticDist::gaussian(3.0, 2.0).unwrap(),
            AnalyticDist::uniform(2.0, 4.0).unwrap(),
            AnalyticDist::exponential(1.0).unwrap(),
            AnalyticDist::exponential(2.5).unwrap(),
            AnalyticDist::mixture(
                vec![0.5, 0.5],
                vec![AnalyticDist::gaussian(0.0, 1.0).unwrap(), AnalyticDist::gaussian(4.0, 1.0).unwrap()],
            )
            .unwrap(),
            AnalyticDist::mixture(
                vec![0.2, 0.3, 0.5],
                vec![
                    AnalyticDist::gaussian(-2.0, 0.5).unwrap(),
                    AnalyticDist::gaussian(0.0, 3.0).unwrap(),
                    AnalyticDist::gaussian(1.0, 0.2).unwrap(),
                ],
            )
            .unwrap(),
        ]
    }

    #[test]
    fn pdf_values() {
        let g = AnalyticDist::standard_normal();
        let expected = 1.0 / (2.0 * PI).sqrt();
        assert!((g.pdf(0.0) - expected).abs() < 1e-15);
        assert!((g.pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(AnalyticDist::uniform(0.0, 1.0).unwrap().pdf(0.5), 1.0);
        assert_eq!(AnalyticDist::exponential(1.0).unwrap().pdf(0.0), 1.0);
    }

    #[test]
    fn cdf_values() {
        assert_eq!(AnalyticDist::standard_normal().cdf(0.0), 0.5);
        assert_eq!(AnalyticDist::uniform(2.0, 4.0).unwrap().cdf(3.0), 0.5);
        let e = AnalyticDist::exponential(1.0).unwrap();
        assert!((e.cdf(std::f64::consts::LN_2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_values() {
        assert_eq!(AnalyticDist::standard_normal().quantile(0.5).unwrap(), 0.0);
        let e = AnalyticDist::exponential(1.0).unwrap();
        assert!((e.quantile(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-10);
        let g = AnalyticDist::gaussian(3.0, 2.0).unwrap();
        // Phi(1) = 0.8413447461 to ten places; the residual maps to ~2e-10 in x.
        assert!((g.quantile(0.841_344_746_1).unwrap() - 5.0).abs() < 1e-9);
        assert!(g.quantile(0.0).is_err());
        assert!(g.quantile(1.0).is_err());
        assert!(g.quantile(f64::NAN).is_err());
    }

    #[test]
    fn means() {
        assert_eq!(AnalyticDist::gaussian(3.0, 2.0).unwrap().mean(), 3.0);
        assert_eq!(AnalyticDist::uniform(0.0, 4.0).unwrap().mean(), 2.0);
        assert_eq!(zoo()[5].mean(), 2.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(AnalyticDist::gaussian(0.0, 0.0).is_err());
        assert!(AnalyticDist::uniform(1.0, 1.0).is_err());
        assert!(AnalyticDist::exponential(-1.0).is_err());
        assert!(AnalyticDist::mixture(vec![0.5, 0.6], zoo()[..2].to_vec()).is_err());
        assert!(AnalyticDist::mixture(vec![-0.5, 1.5], zoo()[..2].to_vec()).is_err());
    }

    #[test]
    fn cdf_inverts_quantile_on_grid() {
        for d in zoo() {
            for k in 1..100 {
                let tau = k as f64 / 100.0;
                let x = d.quantile(tau).unwrap();
                assert!((d.cdf(x) - tau).abs() <= 1e-9, "{d:?} tau {tau}");
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf_on_interior() {
        for d in zoo() {
            let (lo, hi) = d.support();
            for k in 1..20 {
                let x = lo + (hi - lo) * k as f64 / 20.0;
                let p = d.cdf(x);
                if p < 1e-6 || p > 1.0 - 1e-6 || d.pdf(x) < 1e-3 {
                    continue;
                }
                let back = d.quantile(p).unwrap();
                assert!((back - x).abs() < 1e-9, "{d:?} x {x} back {back}");
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for d in zoo() {
            let (lo, hi) = d.support();
            let mass = integrate(|x| d.pdf(x), lo, hi, 1e-9).unwrap();
            assert!((mass - 1.0).abs() <= 1e-7, "{d:?} mass {mass}");
        }
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        let mut rng = Rng::new(5);
        for d in zoo() {
            let (lo, hi) = d.support();
            let mut checked = 0;
            while checked < 20 {
                let x = rng.uniform_range(lo, hi);
                let pdf = d.pdf(x);
                if pdf < 1e-4 {
                    continue;
                }
                let h = 1e-5;
                // Skip kinks of the uniform density.
                if let AnalyticDist::Uniform { low, high } = d {
                    if (x - low).abs() < 2.0 * h || (x - high).abs() < 2.0 * h {
                        continue;
                    }
                }
                let fd = (d.cdf(x + h) - d.cdf(x - h)) / (2.0 * h);
                assert!(((fd - pdf) / pdf).abs() < 1e-6, "{d:?} x {x}: {fd} vs {pdf}");
                checked += 1;
            }
        }
    }

    #[test]
    fn sampling_matches_mean() {
        let mut rng = Rng::new(9);
        for d in zoo() {
            let m = 200_000;
            let mean = (0..m).map(|_| d.sample(&mut rng)).sum::<f64>() / m as f64;
            assert!((mean - d.mean()).abs() < 0.03, "{d:?} {mean}");
        }
    }
}
