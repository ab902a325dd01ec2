//! Pinball and Huber quantile losses, and the expected pinball loss of an
//! analytic law, which is minimized at the true quantile.

use aiqn::divergence::expected_pinball;
use aiqn::losses::{huber_qr_loss, qr_loss, LossConfig};
use aiqn::numerics::AnalyticDist;

fn main() -> aiqn::Result<()> {
    let tau = 0.8;
    println!("{:>6} {:>10} {:>10}", "u", "pinball", "huber");
    for u in [-1.0, -0.001, 0.0, 0.001, 1.0] {
        println!("{u:>6} {:>10.6} {:>10.6}", qr_loss(u, tau), huber_qr_loss(u, tau, LossConfig::default().kappa));
    }

    let p = AnalyticDist::gaussian(0.0, 1.0)?;
    let truth = p.quantile(tau)?;
    println!("\nexpected pinball for N(0, 1), tau = {tau}; true quantile {truth:.4}");
    for q in [truth - 0.5, truth - 0.1, truth, truth + 0.1, truth + 0.5] {
        println!("  q = {q:>7.4}: {:.6}", expected_pinball(&p, q, tau)?);
    }
    Ok(())
}
