//! Learns a correlated two-dimensional Gaussian autoregressively and checks
//! the sample correlation and the evaluation suite.

use aiqn::cli::mvn_dataset;
use aiqn::network::{AiqnModel, ModelSpec};
use aiqn::numerics::Rng;
use aiqn::sampling::{eval_suite, pearson, sample, EvalOptions, SampleRequest};
use aiqn::training::{train, TrainConfig};

fn main() -> aiqn::Result<()> {
    let data = mvn_dataset(2, 0.0, 1.0, 0.8, 10_000, &mut Rng::new(11))?;
    let model = AiqnModel::new(ModelSpec::new(2), &mut Rng::new(12))?;
    let cfg = TrainConfig { steps: 8_000, learning_rate: 1e-3, polyak: 0.999, seed: 13, ..Default::default() };
    let (ckpt, _) = train(model, &data, None, &cfg)?;
    let model = ckpt.model()?;

    let s = sample(&model, &SampleRequest::new(5_000, 14))?;
    println!("data correlation:   {:.3}", pearson(&data.column(0), &data.column(1))?);
    println!("sample correlation: {:.3}", pearson(&s.column(0), &s.column(1))?);

    let table = eval_suite(&model, &data, &EvalOptions::new(15))?;
    print!("\n{}", table.to_csv_string());
    Ok(())
}
