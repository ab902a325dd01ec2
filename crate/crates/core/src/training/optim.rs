//! First-order optimizers and Polyak averaging over [`ParamSet`]s.

use super::config::OptimizerKind;
use crate::error::{Error, Result};
use crate::network::ParamSet;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const RMSPROP_EPS: f64 = 1e-8;

/// Moment accumulators mirroring the parameter layout. Adam uses both;
/// RMSProp only `second`; SGD neither.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: usize,
    pub first: ParamSet,
    pub second: ParamSet,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        Self { kind, step: 0, first: params.zeros_like(), second: params.zeros_like() }
    }
}

fn check(params: &ParamSet, grads: &ParamSet, state: &OptimizerState) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(&state.first)?;
    params.check_layout(&state.second)?;
    for (name, g) in grads.iter() {
        if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Training {
                step: state.step + 1,
                reason: format!("non-finite gradient in {name}[{pos}]"),
            });
        }
    }
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState, lr: f64) -> Result<()> {
    check(params, grads, state)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    let tensors = params.tensors_mut().iter_mut();
    let moments = state.first.tensors_mut().iter_mut().zip(state.second.tensors_mut().iter_mut());
    for ((p, g), (m, v)) in tensors.zip(grads.tensors()).zip(moments) {
        let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// RMSProp without momentum.
pub fn rmsprop_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState, lr: f64) -> Result<()> {
    check(params, grads, state)?;
    state.step += 1;
    for ((p, g), v) in params.tensors_mut().iter_mut().zip(grads.tensors()).zip(state.second.tensors_mut()) {
        let (p, v) = (p.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.data()[i];
            v[i] = RMSPROP_DECAY * v[i] + (1.0 - RMSPROP_DECAY) * gi * gi;
            p[i] -= lr * gi / (v[i].sqrt() + RMSPROP_EPS);
        }
    }
    Ok(())
}

pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState, lr: f64) -> Result<()> {
    check(params, grads, state)?;
    state.step += 1;
    for (p, g) in params.tensors_mut().iter_mut().zip(grads.tensors()) {
        for (pi, gi) in p.data_mut().iter_mut().zip(g.data()) {
            *pi -= lr * gi;
        }
    }
    Ok(())
}

/// Dispatches on `state.kind`.
pub fn optimizer_step(params: &mut ParamSet, grads: &ParamSet, state: &mut OptimizerState, lr: f64) -> Result<()> {
    match state.kind {
        OptimizerKind::Adam => adam_step(params, grads, state, lr),
        OptimizerKind::RmsProp => rmsprop_step(params, grads, state, lr),
        OptimizerKind::Sgd => sgd_step(params, grads, state, lr),
    }
}

/// `avg = w avg + (1 - w) params`, elementwise.
pub fn polyak_update(avg: &mut ParamSet, params: &ParamSet, w: f64) -> Result<()> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::domain(format!("polyak weight must lie in [0, 1), got {w}")));
    }
    avg.check_layout(params)?;
    for (a, p) in avg.tensors_mut().iter_mut().zip(params.tensors()) {
        for (ai, pi) in a.data_mut().iter_mut().zip(p.data()) {
            *ai = w * *ai + (1.0 - w) * pi;
        }
    }
    Ok(())
}
