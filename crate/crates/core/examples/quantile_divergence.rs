//! Quantile divergence between analytic laws, next to the sample-based
//! 1-Wasserstein and Fréchet distances.

use aiqn::divergence::{frechet_distance, moment_summary, quantile_divergence, wasserstein1_empirical, QuantileFn};
use aiqn::numerics::{AnalyticDist, Rng, Tensor};

fn main() -> aiqn::Result<()> {
    let p = AnalyticDist::gaussian(0.0, 1.0)?;
    let mut rng = Rng::new(7);
    let a: Vec<f64> = (0..20_000).map(|_| p.sample(&mut rng)).collect();

    for (name, q) in [
        ("N(0, 1)", AnalyticDist::gaussian(0.0, 1.0)?),
        ("N(0.5, 1)", AnalyticDist::gaussian(0.5, 1.0)?),
        ("N(0, 2)", AnalyticDist::gaussian(0.0, 2.0)?),
        ("Exp(1)", AnalyticDist::exponential(1.0)?),
    ] {
        let qf = QuantileFn::new(|t| q.quantile(t).unwrap_or(f64::NAN), false)?;
        let qdiv = quantile_divergence(&p, &qf, 1e-9)?;
        let b: Vec<f64> = (0..20_000).map(|_| q.sample(&mut rng)).collect();
        let w1 = wasserstein1_empirical(&a, &b)?;
        let fd = frechet_distance(
            &moment_summary(&Tensor::new(vec![a.len(), 1], a.clone())?)?,
            &moment_summary(&Tensor::new(vec![b.len(), 1], b)?)?,
        )?;
        println!("q(N(0, 1), {name:<9}) = {qdiv:.6}   W1 = {w1:.4}   Frechet = {fd:.4}");
    }
    Ok(())
}
