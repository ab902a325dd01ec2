//! Central finite differences against the reverse pass.

use std::fmt;

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::network::AiqnModel;
use crate::numerics::{Rng, Tensor};

/// Denominator floor of the relative error, so vanishing gradients compare
/// on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// A fixed batch on which gradients are compared.
#[derive(Debug, Clone)]
pub struct GradBatch {
    pub x: Tensor,
    pub tau: Tensor,
    pub target: Tensor,
    pub ctx: Option<Tensor>,
}

/// Adds `delta` to one analytic gradient entry before comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fault {
    pub param: usize,
    pub index: usize,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Models with at most this many unmasked entries are checked exhaustively.
    pub exhaustive_limit: usize,
    /// Number of randomly chosen entries checked on larger models.
    pub subset: usize,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { eps: 1e-5, exhaustive_limit: 5000, subset: 200, seed: 0, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamAddress {
    pub param: String,
    pub index: usize,
}

impl fmt::Display for ParamAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.param, self.index)
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: ParamAddress,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Random inputs and `tau`, with targets offset from the current predictions
/// so that every error sits well inside one branch of the Huber loss: half
/// in the quadratic region, half far out on the linear part.
pub fn synthetic_batch(model: &AiqnModel, batch: usize, cfg: LossConfig, rng: &mut Rng) -> Result<GradBatch> {
    let n = model.n();
    let c = model.spec().context_width;
    let x = Tensor::new(vec![batch, n], (0..batch * n).map(|_| rng.uniform()).collect())?;
    let tau = Tensor::new(vec![batch, n], (0..batch * n).map(|_| rng.uniform_range(0.05, 0.95)).collect())?;
    let ctx = if c > 0 {
        let mut t = Tensor::zeros(vec![batch, c]);
        for r in 0..batch {
            let k = rng.below(c);
            t.row_mut(r)[k] = 1.0;
        }
        Some(t)
    } else {
        None
    };
    let pred = model.forward(&x, &tau, ctx.as_ref())?;
    let mut target = pred.clone();
    for v in target.data_mut() {
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        let mag = if cfg.kappa > 0.0 && rng.uniform() < 0.5 {
            cfg.kappa * rng.uniform_range(0.25, 0.75)
        } else {
            rng.uniform_range(0.1, 0.5)
        };
        *v += sign * mag;
    }
    Ok(GradBatch { x, tau, target, ctx })
}

/// Compares the analytic loss gradient with central differences of step
/// `eps`. The relative error is `|a - f| / max(|a|, |f|, REL_ERROR_FLOOR)`.
/// Masked weights are skipped: they are structurally zero.
pub fn grad_check(
    model: &AiqnModel,
    batch: &GradBatch,
    cfg: LossConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(opts.eps > 0.0) {
        return Err(Error::domain("finite-difference step must be positive"));
    }
    let ctx = batch.ctx.as_ref();
    let (_, mut grads) = model.loss_and_grads(&batch.x, &batch.tau, &batch.target, cfg, ctx)?;
    if let Some(f) = opts.fault {
        if f.param >= grads.len() || f.index >= grads.get(f.param).len() {
            return Err(Error::domain("fault address out of range"));
        }
        grads.get_mut(f.param).data_mut()[f.index] += f.delta;
    }

    let masks = model.param_masks();
    let mut candidates = Vec::new();
    for (p, t) in model.params().tensors().iter().enumerate() {
        for i in 0..t.len() {
            if masks[p].is_none_or(|m| m.data()[i] != 0.0) {
                candidates.push((p, i));
            }
        }
    }
    if candidates.len() > opts.exhaustive_limit {
        let mut rng = Rng::new(opts.seed).fork(7);
        let k = opts.subset.min(candidates.len());
        for j in 0..k {
            let pick = j + rng.below(candidates.len() - j);
            candidates.swap(j, pick);
        }
        candidates.truncate(k);
        if let Some(f) = opts.fault {
            if !candidates.contains(&(f.param, f.index)) {
                candidates.push((f.param, f.index));
            }
        }
        candidates.sort_unstable();
    }

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: ParamAddress { param: String::new(), index: 0 },
        analytic: 0.0,
        numeric: 0.0,
        checked: candidates.len(),
    };
    for &(p, i) in &candidates {
        let orig = probe.params().get(p).data()[i];
        probe.params_mut().get_mut(p).data_mut()[i] = orig + opts.eps;
        let up = probe.loss(&batch.x, &batch.tau, &batch.target, cfg, ctx)?;
        probe.params_mut().get_mut(p).data_mut()[i] = orig - opts.eps;
        let down = probe.loss(&batch.x, &batch.tau, &batch.target, cfg, ctx)?;
        probe.params_mut().get_mut(p).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * opts.eps);
        let analytic = grads.get(p).data()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        if rel > report.max_rel_error || report.worst.param.is_empty() {
            report.max_rel_error = rel;
            report.worst = ParamAddress { param: model.params().names()[p].clone(), index: i };
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
