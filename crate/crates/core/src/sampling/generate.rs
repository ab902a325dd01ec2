use crate::error::{Error, Result};
use crate::network::{AiqnModel, TauMode};
use crate::numerics::{Rng, Tensor};

/// Rows pushed through the network at once while sampling.
const CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRequest {
    pub count: usize,
    pub seed: u64,
    /// Overrides the model's own `tau` mode.
    pub tau_mode: Option<TauMode>,
    /// One context vector shared by every sample.
    pub context: Option<Vec<f64>>,
    /// Inclusive output range; `None` leaves samples unclamped.
    pub clamp: Option<(f64, f64)>,
}

impl SampleRequest {
    pub fn new(count: usize, seed: u64) -> Self {
        Self { count, seed, tau_mode: None, context: None, clamp: None }
    }

    pub fn with_tau_mode(mut self, mode: TauMode) -> Self {
        self.tau_mode = Some(mode);
        self
    }

    pub fn with_context(mut self, context: Vec<f64>) -> Self {
        self.context = Some(context);
        self
    }

    pub fn with_clamp(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }
}

/// Completions of a fixed prefix. `prefix[j]` is the value of the dimension
/// at position `j` of the model's ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintRequest {
    pub prefix: Vec<f64>,
    pub completions: usize,
    pub seed: u64,
    pub context: Option<Vec<f64>>,
}

impl InpaintRequest {
    pub fn new(prefix: Vec<f64>, completions: usize, seed: u64) -> Self {
        Self { prefix, completions, seed, context: None }
    }

    pub fn with_context(mut self, context: Vec<f64>) -> Self {
        self.context = Some(context);
        self
    }
}

/// Draws `req.count` samples, filling dimensions in the model's ordering.
pub fn sample(model: &AiqnModel, req: &SampleRequest) -> Result<Tensor> {
    let model = match req.tau_mode {
        Some(mode) if mode != model.spec().tau_mode => model.with_tau_mode(mode),
        _ => model.clone(),
    };
    if let Some((lo, hi)) = req.clamp {
        if !(lo <= hi) {
            return Err(Error::domain(format!("empty clamp range [{lo}, {hi}]")));
        }
    }
    let mut out = fill(&model, &[], req.count, req.seed, req.context.as_deref())?;
    if let Some((lo, hi)) = req.clamp {
        out.data_mut().iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }
    Ok(out)
}

/// Copies the prefix into every completion and samples the remaining
/// positions autoregressively with fresh levels per completion.
pub fn inpaint(model: &AiqnModel, req: &InpaintRequest) -> Result<Tensor> {
    let n = model.n();
    let k = req.prefix.len();
    if k == 0 || k >= n {
        return Err(Error::domain(format!("prefix length {k} must lie in [1, {}]", n - 1)));
    }
    if let Some(v) = req.prefix.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("prefix value {v} is not finite")));
    }
    fill(model, &req.prefix, req.completions, req.seed, req.context.as_deref())
}

fn fill(model: &AiqnModel, prefix: &[f64], count: usize, seed: u64, context: Option<&[f64]>) -> Result<Tensor> {
    let n = model.n();
    let c = model.spec().context_width;
    if count == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    match context {
        Some(ctx) if ctx.len() != c => {
            return Err(Error::domain(format!("context has width {}, model expects {c}", ctx.len())));
        }
        None if c > 0 => return Err(Error::domain(format!("model expects a context of width {c}"))),
        _ => {}
    }
    let ordering = model.spec().ordering.clone();
    let root = Rng::new(seed);
    let mut out = Tensor::zeros(vec![count, n]);
    for start in (0..count).step_by(CHUNK) {
        let rows = CHUNK.min(count - start);
        let mut x = Tensor::zeros(vec![rows, n]);
        let mut tau = Tensor::zeros(vec![rows, n]);
        for r in 0..rows {
            let mut rng = root.fork((start + r) as u64);
            tau.row_mut(r).iter_mut().for_each(|t| *t = rng.uniform());
            for (&dim, &v) in ordering.iter().zip(prefix) {
                x.set2(r, dim, v);
            }
        }
        let ctx = context.map(|v| Tensor::new(vec![rows, c], v.repeat(rows))).transpose()?;
        for &dim in &ordering[prefix.len()..] {
            let col = model.forward_dim(&x, &tau, ctx.as_ref(), dim)?;
            for (r, v) in col.into_iter().enumerate() {
                x.set2(r, dim, v);
            }
        }
        for r in 0..rows {
            out.row_mut(start + r).copy_from_slice(x.row(r));
        }
    }
    Ok(out)
}
