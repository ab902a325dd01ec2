//! Reads the density of a trained model off its quantile function,
//! p(q(tau)) = 1 / q'(tau), with the exact derivative and a finite-difference
//! cross-check.

use aiqn::network::{AiqnModel, ModelSpec};
use aiqn::numerics::{AnalyticDist, Rng, Tensor};
use aiqn::sampling::quantile_density_report;
use aiqn::training::{train, TrainConfig};

fn main() -> aiqn::Result<()> {
    let truth = AnalyticDist::gaussian(0.0, 1.0)?;
    let mut rng = Rng::new(31);
    let data = Tensor::new(vec![20_000, 1], (0..20_000).map(|_| truth.sample(&mut rng)).collect())?;
    let model = AiqnModel::new(ModelSpec::new(1), &mut Rng::new(32))?;
    let cfg = TrainConfig { steps: 6_000, learning_rate: 1e-3, polyak: 0.999, seed: 33, ..Default::default() };
    let model = train(model, &data, None, &cfg)?.0.model()?;

    let taus = [0.1, 0.3, 0.5, 0.7, 0.9];
    println!("{:>5} {:>10} {:>10} {:>9} {:>9}", "tau", "dq/dtau", "fd", "density", "true");
    for row in quantile_density_report(&model, &[0.0], &taus, 0, None)? {
        let x = truth.quantile(row.tau)?;
        let density = row.density.map_or("-".to_string(), |d| format!("{d:.4}"));
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>9} {:>9.4}",
            row.tau,
            row.exact,
            row.finite_difference,
            density,
            truth.pdf(x)
        );
    }
    Ok(())
}
