//! Fits a one-dimensional Gaussian by quantile regression and compares the
//! learned quantile function with the analytic one.

use aiqn::divergence::{quantile_divergence, QuantileFn};
use aiqn::network::{AiqnModel, ModelSpec};
use aiqn::numerics::{AnalyticDist, Rng, Tensor};
use aiqn::training::{train, TrainConfig};

fn main() -> aiqn::Result<()> {
    let truth = AnalyticDist::gaussian(3.0, 2.0)?;
    let mut rng = Rng::new(1);
    let data = Tensor::new(vec![50_000, 1], (0..50_000).map(|_| truth.sample(&mut rng)).collect())?;

    let model = AiqnModel::new(ModelSpec::new(1), &mut Rng::new(2))?;
    let cfg = TrainConfig { steps: 10_000, learning_rate: 1e-3, polyak: 0.999, seed: 3, ..Default::default() };
    let (ckpt, log) = train(model, &data, None, &cfg)?;
    let model = ckpt.model()?;

    let losses = log.losses();
    let tail = &losses[losses.len() - 500..];
    println!("mean loss over the last 500 steps: {:.4}", tail.iter().sum::<f64>() / 500.0);

    let x = Tensor::zeros(vec![1, 1]);
    let q = |t: f64| model.forward_dim(&x, &Tensor::filled(vec![1, 1], t), None, 0).map_or(f64::NAN, |v| v[0]);
    for t in [0.05, 0.25, 0.5, 0.75, 0.95] {
        println!("tau {t:.2}: model {:>7.3}  true {:>7.3}", q(t), truth.quantile(t)?);
    }
    let qdiv = quantile_divergence(&truth, &QuantileFn::new(q, false)?, 1e-7)?;
    println!("quantile divergence: {qdiv:.5}");
    Ok(())
}
