//! Checks the analytic parameter gradients of a fresh model against central
//! finite differences, then shows that a corrupted gradient is caught.

use aiqn::losses::LossConfig;
use aiqn::network::{AiqnModel, ModelSpec};
use aiqn::numerics::Rng;
use aiqn::training::{grad_check, synthetic_batch, Fault, GradCheckOptions};

fn main() -> aiqn::Result<()> {
    let model = AiqnModel::new(ModelSpec::new(4).with_hidden(vec![16, 16]), &mut Rng::new(41))?;
    let loss = LossConfig::default();
    let batch = synthetic_batch(&model, 8, loss, &mut Rng::new(42))?;

    let clean = grad_check(&model, &batch, loss, &GradCheckOptions::default())?;
    println!("clean: max relative error {:.2e} over {} entries", clean.max_rel_error, clean.checked);

    let fault = Fault { param: model.params().len() - 1, index: 0, delta: 1e-2 };
    let opts = GradCheckOptions { fault: Some(fault), ..Default::default() };
    let bad = grad_check(&model, &batch, loss, &opts)?;
    println!("fault: max relative error {:.2e} at {}", bad.max_rel_error, bad.worst);
    Ok(())
}
