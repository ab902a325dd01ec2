//! Synthetic datasets.

use crate::error::{Error, Result};
use crate::numerics::{AnalyticDist, Rng, Tensor};

/// `count` independent draws from `dist`, as a `[count, 1]` tensor.
pub fn scalar_dataset(dist: &AnalyticDist, count: usize, rng: &mut Rng) -> Tensor {
    Tensor::new(vec![count, 1], (0..count).map(|_| dist.sample(rng)).collect()).expect("finite draws")
}

/// Equicorrelated Gaussian rows: every marginal is `N(mean, std²)` and every
/// pair has correlation `rho ∈ [0, 1)`, built as
/// `mean + std (√ρ z₀ + √(1-ρ) zᵢ)` with a shared `z₀`.
pub fn mvn_dataset(dim: usize, mean: f64, std: f64, rho: f64, count: usize, rng: &mut Rng) -> Result<Tensor> {
    if dim == 0 {
        return Err(Error::config("dim must be at least 1"));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::config(format!("correlation must lie in [0, 1), got {rho}")));
    }
    if !(std > 0.0 && std.is_finite() && mean.is_finite()) {
        return Err(Error::config(format!("invalid marginal N({mean}, {std}²)")));
    }
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut data = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let z0 = rng.normal();
        for _ in 0..dim {
            data.push(mean + std * (a * z0 + b * rng.normal()));
        }
    }
    Tensor::new(vec![count, dim], data)
}

/// Ambiguous 8×8 bars. The top four rows hold a vertical bar in a column
/// `c ∈ {0, 1, 2, 3}` drawn uniformly. The bottom four rows hold a bar in
/// column `c` or `c + 4`, each with probability 1/2. Bar pixels are
/// `1 - 0.05 u` and background pixels `0.05 u` with `u ~ U[0, 1)`, so every
/// value stays in `[0, 1]`.
pub struct Bars;

impl Bars {
    pub const SIDE: usize = 8;
    pub const N: usize = 64;
    pub const NOISE: f64 = 0.05;
    /// Pixels in the top half, which is also the inpainting prefix.
    pub const PREFIX: usize = 32;

    /// Noise-free image with the top bar in `top` and the bottom bar in `bottom`.
    pub fn clean(top: usize, bottom: usize) -> Vec<f64> {
        let mut img = vec![0.0; Self::N];
        for r in 0..Self::SIDE {
            let col = if r < Self::SIDE / 2 { top } else { bottom };
            img[r * Self::SIDE + col] = 1.0;
        }
        img
    }

    /// The two noise-free completions compatible with a top bar in `top`.
    pub fn modes(top: usize) -> [Vec<f64>; 2] {
        [Self::clean(top, top), Self::clean(top, top + 4)]
    }

    /// Column of the brightest top-half column; ties go to the lowest column.
    pub fn top_column(image: &[f64]) -> usize {
        let half = Self::SIDE / 2;
        let score = |c: usize| (0..half).map(|r| image[r * Self::SIDE + c]).sum::<f64>();
        (0..half).fold(0, |best, c| if score(c) > score(best) { c } else { best })
    }

    pub fn draw(rng: &mut Rng) -> Vec<f64> {
        let top = rng.below(4);
        let bottom = if rng.uniform() < 0.5 { top } else { top + 4 };
        Self::clean(top, bottom)
            .into_iter()
            .map(|v| {
                let u = Self::NOISE * rng.uniform();
                if v == 1.0 {
                    1.0 - u
                } else {
                    u
                }
            })
            .collect()
    }

    pub fn dataset(count: usize, rng: &mut Rng) -> Tensor {
        let data = (0..count).flat_map(|_| Self::draw(rng)).collect();
        Tensor::new(vec![count, Self::N], data).expect("shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{nearest_mode, pearson};

    #[test]
    fn bars_law() {
        let mut rng = Rng::new(1);
        let data = Bars::dataset(4000, &mut rng);
        assert_eq!(data.shape(), &[4000, 64]);
        assert!(data.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let mut counts = [[0usize; 2]; 4];
        for r in 0..4000 {
            let img = data.row(r);
            let top = Bars::top_column(img);
            let modes = Bars::modes(top);
            let k = nearest_mode(img, &modes).unwrap();
            // Noise is small, so the drawn image sits far closer to its own mode.
            let d: f64 = img.iter().zip(&modes[k]).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(d <= 64.0 * Bars::NOISE * Bars::NOISE);
            counts[top][k] += 1;
        }
        for c in counts {
            let total = (c[0] + c[1]) as f64;
            assert!((total / 4000.0 - 0.25).abs() < 0.03);
            assert!((c[0] as f64 / total - 0.5).abs() < 0.06, "{c:?}");
        }
    }

    #[test]
    fn bars_modes_share_the_prefix() {
        for top in 0..4 {
            let [a, b] = Bars::modes(top);
            assert_eq!(a[..Bars::PREFIX], b[..Bars::PREFIX]);
            assert_ne!(a[Bars::PREFIX..], b[Bars::PREFIX..]);
            assert_eq!(Bars::top_column(&a), top);
        }
    }

    #[test]
    fn mvn_moments() {
        let mut rng = Rng::new(2);
        let d = mvn_dataset(2, 1.0, 2.0, 0.8, 20_000, &mut rng).unwrap();
        let (a, b) = (d.column(0), d.column(1));
        assert!((pearson(&a, &b).unwrap() - 0.8).abs() < 0.02);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((mean - 1.0).abs() < 0.05 && (var.sqrt() - 2.0).abs() < 0.05);
        assert!(mvn_dataset(2, 0.0, 1.0, 1.0, 1, &mut rng).is_err());
        assert!(mvn_dataset(2, 0.0, 1.0, -0.1, 1, &mut rng).is_err());
    }

    #[test]
    fn scalar_mean_within_clt_bound() {
        let mut rng = Rng::new(3);
        let d = scalar_dataset(&AnalyticDist::gaussian(3.0, 2.0).unwrap(), 100_000, &mut rng);
        let mean = d.data().iter().sum::<f64>() / 1e5;
        assert!((mean - 3.0).abs() < 0.02);
    }
}
