//! Masked, gated, `tau`-conditioned autoregressive quantile network.
//!
//! Each block `k` has a trunk of `width` hidden units fed by a masked affine
//! map of the previous trunk (or of `x` for the first block):
//!
//! ```text
//! s_f = (M ⊙ W_f) h_prev          s_g = (M ⊙ W_g) h_prev
//! h   = tanh(s_f + b_f) ⊙ σ(s_g + b_g)
//! ```
//!
//! The trunk never sees `tau`. Each output position `i` gets its own gated
//! activation of the same units, with the rescaled level `t_i = 2 tau_i - 1`
//! and the context added inside both gates through weights shared across
//! positions:
//!
//! ```text
//! z_iu = tanh(H_iu s_f,u + b_f,u + a_f,u t_i + (C_f c)_u)
//!      ⊙ σ(H_iu s_g,u + b_g,u + a_g,u t_i + (C_g c)_u)
//! out_i = bias_i + Σ_k Σ_u R^k_iu z^k_iu
//! ```
//!
//! `H_iu` admits only units whose degree is below the rank of `i`, so output
//! `i` depends on earlier inputs, its own `tau_i` and the context.

use super::masks::{build_masks, ranks_of, Masks};
use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::numerics::tensor::gemm;
use crate::numerics::{Rng, Tensor};

const PARAMS_PER_BLOCK: usize = 9;
const W_F: usize = 0;
const W_G: usize = 1;
const B_F: usize = 2;
const B_G: usize = 3;
const TAU_F: usize = 4;
const TAU_G: usize = 5;
const CTX_F: usize = 6;
const CTX_G: usize = 7;
const READOUT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMode {
    /// One level per output dimension.
    PerDimension,
    /// The first column's level drives every dimension (comonotonic outputs).
    Shared,
}

impl TauMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TauMode::PerDimension => "per-dimension",
            TauMode::Shared => "shared",
        }
    }
}

impl std::str::FromStr for TauMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-dimension" => Ok(TauMode::PerDimension),
            "shared" => Ok(TauMode::Shared),
            other => Err(Error::config(format!("unknown tau mode {other:?}"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub hidden: Vec<usize>,
    /// Generation order: `ordering[0]` is produced first.
    pub ordering: Vec<usize>,
    pub context_width: usize,
    pub tau_mode: TauMode,
    /// When false every `x` path is masked out, giving independent marginals.
    pub autoregressive: bool,
}

impl ModelSpec {
    /// Identity ordering, per-dimension `tau`, no context, with the default
    /// width for the dimension.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hidden: default_hidden(n),
            ordering: (0..n).collect(),
            context_width: 0,
            tau_mode: TauMode::PerDimension,
            autoregressive: true,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_ordering(mut self, ordering: Vec<usize>) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_context(mut self, width: usize) -> Self {
        self.context_width = width;
        self
    }

    pub fn with_tau_mode(mut self, mode: TauMode) -> Self {
        self.tau_mode = mode;
        self
    }

    pub fn with_autoregressive(mut self, on: bool) -> Self {
        self.autoregressive = on;
        self
    }
}

/// Two blocks of 64 up to 16 dimensions, three blocks of 256 beyond.
pub fn default_hidden(n: usize) -> Vec<usize> {
    if n <= 16 {
        vec![64, 64]
    } else {
        vec![256, 256, 256]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AiqnModel {
    spec: ModelSpec,
    ranks: Vec<usize>,
    masks: Masks,
    params: ParamSet,
}

/// Activations kept from a forward pass for the reverse pass.
struct Cache {
    batch: usize,
    /// Input of each block, `[batch, fan_in]`.
    inputs: Vec<Vec<f64>>,
    trunk_tanh: Vec<Vec<f64>>,
    trunk_sig: Vec<Vec<f64>>,
    /// `[batch, n, width]` gate values of the per-position heads.
    head_tanh: Vec<Vec<f64>>,
    head_sig: Vec<Vec<f64>>,
    tau_t: Vec<f64>,
    ctx: Vec<f64>,
}

#[inline]
fn tanh(x: f64) -> f64 {
    let e = (2.0 * x).exp();
    1.0 - 2.0 / (e + 1.0)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn glorot(t: &mut Tensor, fan_in: usize, fan_out: usize, mask: Option<&Tensor>, rng: &mut Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = t.len();
    for idx in 0..len {
        let keep = mask.is_none_or(|m| m.data()[idx] != 0.0);
        let v = rng.uniform_range(-limit, limit);
        t.data_mut()[idx] = if keep { v } else { 0.0 };
    }
}

impl AiqnModel {
    /// Builds masks and Glorot-initialized parameters; biases start at zero.
    pub fn new(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        let mut mask_rng = rng.fork(0);
        let mut init_rng = rng.fork(1);
        let mut masks = build_masks(spec.n, &spec.hidden, &spec.ordering, &mut mask_rng)?;
        if !spec.autoregressive {
            masks.disconnect_inputs();
        }
        let mut model = Self::assemble(spec, masks)?;
        let total_width: usize = model.spec.hidden.iter().sum();
        let n = model.spec.n;
        let c = model.spec.context_width;
        for k in 0..model.spec.hidden.len() {
            let width = model.spec.hidden[k];
            let fan_in = model.fan_in(k);
            let base = k * PARAMS_PER_BLOCK;
            for (j, m) in [(W_F, &model.masks.trunk[k]), (W_G, &model.masks.trunk[k])] {
                let mask = m.clone();
                glorot(model.params.get_mut(base + j), fan_in, width, Some(&mask), &mut init_rng);
            }
            // Each unit's τ weight is its own scalar map, so fan-in and fan-out are both 1.
            glorot(model.params.get_mut(base + TAU_F), 1, 1, None, &mut init_rng);
            glorot(model.params.get_mut(base + TAU_G), 1, 1, None, &mut init_rng);
            if c > 0 {
                glorot(model.params.get_mut(base + CTX_F), c, width, None, &mut init_rng);
                glorot(model.params.get_mut(base + CTX_G), c, width, None, &mut init_rng);
            }
            glorot(model.params.get_mut(base + READOUT), total_width, n, None, &mut init_rng);
        }
        Ok(model)
    }

    /// Restores a model from stored hidden-unit degrees and parameters.
    pub fn from_parts(spec: ModelSpec, degrees: Vec<Vec<usize>>, params: ParamSet) -> Result<Self> {
        if degrees.iter().map(Vec::len).ne(spec.hidden.iter().copied()) {
            return Err(Error::domain("stored degrees do not match the hidden sizes"));
        }
        let mut masks = Masks::from_degrees(spec.n, &spec.ordering, degrees)?;
        if !spec.autoregressive {
            masks.disconnect_inputs();
        }
        let mut model = Self::assemble(spec, masks)?;
        model.set_params(params)?;
        Ok(model)
    }

    /// Zero-parameter model with the given masks.
    pub fn assemble(spec: ModelSpec, masks: Masks) -> Result<Self> {
        let ranks = ranks_of(&spec.ordering)?;
        if spec.n == 0 || spec.hidden.is_empty() || spec.hidden.contains(&0) {
            return Err(Error::domain(format!("invalid architecture n={} hidden={:?}", spec.n, spec.hidden)));
        }
        if ranks.len() != spec.n {
            return Err(Error::domain("ordering length differs from n"));
        }
        if masks.trunk.len() != spec.hidden.len() || masks.head.len() != spec.hidden.len() {
            return Err(Error::domain("mask count differs from block count"));
        }
        let mut params = ParamSet::new();
        let c = spec.context_width;
        for (k, &width) in spec.hidden.iter().enumerate() {
            let fan_in = if k == 0 { spec.n } else { spec.hidden[k - 1] };
            if masks.trunk[k].shape() != [width, fan_in] || masks.head[k].shape() != [spec.n, width] {
                return Err(Error::domain(format!("mask shapes of block {k} do not match the architecture")));
            }
            params.push(format!("block{k}.w_f"), Tensor::zeros(vec![width, fan_in]));
            params.push(format!("block{k}.w_g"), Tensor::zeros(vec![width, fan_in]));
            params.push(format!("block{k}.b_f"), Tensor::zeros(vec![width]));
            params.push(format!("block{k}.b_g"), Tensor::zeros(vec![width]));
            params.push(format!("block{k}.tau_f"), Tensor::zeros(vec![width]));
            params.push(format!("block{k}.tau_g"), Tensor::zeros(vec![width]));
            params.push(format!("block{k}.ctx_f"), Tensor::zeros(vec![width, c]));
            params.push(format!("block{k}.ctx_g"), Tensor::zeros(vec![width, c]));
            params.push(format!("block{k}.readout"), Tensor::zeros(vec![spec.n, width]));
        }
        params.push("out.bias", Tensor::zeros(vec![spec.n]));
        Ok(Self { spec, ranks, masks, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Replaces all parameters; the layout must match.
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        self.params.check_layout(&params)?;
        self.params = params;
        Ok(())
    }

    pub fn with_params(&self, params: ParamSet) -> Result<Self> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    /// The same network read under a different `tau` mode.
    pub fn with_tau_mode(&self, mode: TauMode) -> Self {
        let mut m = self.clone();
        m.spec.tau_mode = mode;
        m
    }

    /// 1-based rank of each dimension in the generation ordering.
    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Trunk-weight mask for every parameter (None for unmasked tensors).
    pub fn param_masks(&self) -> Vec<Option<&Tensor>> {
        let mut out = Vec::with_capacity(self.params.len());
        for k in 0..self.spec.hidden.len() {
            for j in 0..PARAMS_PER_BLOCK {
                out.push(if j == W_F || j == W_G { Some(&self.masks.trunk[k]) } else { None });
            }
        }
        out.push(None);
        out
    }

    fn fan_in(&self, k: usize) -> usize {
        if k == 0 {
            self.spec.n
        } else {
            self.spec.hidden[k - 1]
        }
    }

    fn param(&self, k: usize, j: usize) -> &[f64] {
        self.params.get(k * PARAMS_PER_BLOCK + j).data()
    }

    fn masked_weight(&self, k: usize, j: usize) -> Vec<f64> {
        self.param(k, j).iter().zip(self.masks.trunk[k].data()).map(|(w, m)| w * m).collect()
    }

    fn check_inputs(&self, x: &Tensor, tau: &Tensor, ctx: Option<&Tensor>) -> Result<usize> {
        let n = self.spec.n;
        if x.rank() != 2 || x.shape()[1] != n {
            return Err(Error::domain(format!("x has shape {:?}, expected [batch, {n}]", x.shape())));
        }
        let b = x.rows();
        if tau.shape() != [b, n] {
            return Err(Error::domain(format!("tau has shape {:?}, expected [{b}, {n}]", tau.shape())));
        }
        if let Some(t) = tau.data().iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::domain(format!("tau {t} outside [0, 1]")));
        }
        let c = self.spec.context_width;
        match ctx {
            Some(ctx) if ctx.shape() != [b, c] => {
                Err(Error::domain(format!("context has shape {:?}, expected [{b}, {c}]", ctx.shape())))
            }
            None if c > 0 => Err(Error::domain(format!("model expects a context of width {c}"))),
            _ => Ok(b),
        }
    }

    /// The levels actually used per position after applying the `tau` mode.
    pub fn effective_tau(&self, tau: &Tensor) -> Tensor {
        match self.spec.tau_mode {
            TauMode::PerDimension => tau.clone(),
            TauMode::Shared => {
                let n = self.spec.n;
                let mut t = tau.clone();
                for r in 0..t.rows() {
                    let v = t.get2(r, 0);
                    t.row_mut(r)[..n].fill(v);
                }
                t
            }
        }
    }

    /// Teacher-forced pass: output `[b, i]` estimates the `tau[b, i]`
    /// quantile of dimension `i` given the earlier entries of `x[b]`.
    pub fn forward(&self, x: &Tensor, tau: &Tensor, ctx: Option<&Tensor>) -> Result<Tensor> {
        self.check_inputs(x, tau, ctx)?;
        let (out, _) = self.run(x, tau, ctx, None, false);
        Tensor::new(x.shape().to_vec(), out)
    }

    /// Output column `dim` only, for each row. Cheaper than a full pass when
    /// generating one dimension at a time.
    pub fn forward_dim(&self, x: &Tensor, tau: &Tensor, ctx: Option<&Tensor>, dim: usize) -> Result<Vec<f64>> {
        self.check_inputs(x, tau, ctx)?;
        if dim >= self.spec.n {
            return Err(Error::domain(format!("dimension {dim} out of range")));
        }
        let (out, _) = self.run(x, tau, ctx, Some(dim), false);
        let n = self.spec.n;
        Ok((0..x.rows()).map(|b| out[b * n + dim]).collect())
    }

    /// Batch quantile loss of the teacher-forced outputs against `target`.
    pub fn loss(
        &self,
        x: &Tensor,
        tau: &Tensor,
        target: &Tensor,
        cfg: LossConfig,
        ctx: Option<&Tensor>,
    ) -> Result<f64> {
        let pred = self.forward(x, tau, ctx)?;
        Ok(crate::losses::batch_quantile_loss(&pred, target, &self.effective_tau(tau), cfg)?.0)
    }

    /// Batch quantile loss of the teacher-forced outputs against `target`,
    /// with exact gradients for every parameter.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        tau: &Tensor,
        target: &Tensor,
        cfg: LossConfig,
        ctx: Option<&Tensor>,
    ) -> Result<(f64, ParamSet)> {
        self.check_inputs(x, tau, ctx)?;
        if target.shape() != x.shape() {
            return Err(Error::domain(format!("target has shape {:?}, expected {:?}", target.shape(), x.shape())));
        }
        let (out, cache) = self.run(x, tau, ctx, None, true);
        let pred = Tensor::new(x.shape().to_vec(), out)?;
        let tau_eff = self.effective_tau(tau);
        let (loss, dpred) = crate::losses::batch_quantile_loss(&pred, target, &tau_eff, cfg)?;
        let (grads, _) = self.reverse(cache.as_ref().expect("cache"), dpred.data());
        Ok((loss, grads))
    }

    /// Parameter gradients and `d/dtau` of `Σ dout ⊙ forward(x, tau)`.
    pub fn vjp(&self, x: &Tensor, tau: &Tensor, ctx: Option<&Tensor>, dout: &Tensor) -> Result<(ParamSet, Tensor)> {
        self.check_inputs(x, tau, ctx)?;
        if dout.shape() != x.shape() {
            return Err(Error::domain("cotangent shape differs from output shape"));
        }
        let (_, cache) = self.run(x, tau, ctx, None, true);
        let (grads, dtau_eff) = self.reverse(cache.as_ref().expect("cache"), dout.data());
        let n = self.spec.n;
        let mut dtau = Tensor::zeros(x.shape().to_vec());
        for b in 0..x.rows() {
            match self.spec.tau_mode {
                TauMode::PerDimension => dtau.row_mut(b).copy_from_slice(&dtau_eff[b * n..(b + 1) * n]),
                TauMode::Shared => dtau.row_mut(b)[0] = dtau_eff[b * n..(b + 1) * n].iter().sum(),
            }
        }
        Ok((grads, dtau))
    }

    /// Exact `∂out_dim / ∂tau` for a single point by one reverse pass. In
    /// shared mode the derivative is taken with respect to the shared level.
    pub fn dquantile_dtau(&self, x: &[f64], tau: &[f64], ctx: Option<&[f64]>, dim: usize) -> Result<f64> {
        let n = self.spec.n;
        if dim >= n {
            return Err(Error::domain(format!("dimension {dim} out of range")));
        }
        let xt = Tensor::new(vec![1, n], x.to_vec())?;
        let tt = Tensor::new(vec![1, n], tau.to_vec())?;
        let ct = ctx.map(|c| Tensor::new(vec![1, c.len()], c.to_vec())).transpose()?;
        let mut dout = Tensor::zeros(vec![1, n]);
        dout.data_mut()[dim] = 1.0;
        let (_, dtau) = self.vjp(&xt, &tt, ct.as_ref(), &dout)?;
        Ok(match self.spec.tau_mode {
            TauMode::PerDimension => dtau.data()[dim],
            TauMode::Shared => dtau.data()[0],
        })
    }

    /// Central-difference estimate `(Q(tau + h) - Q(tau - h)) / 2h`, with `h`
    /// halved until both probes lie inside `(0, 1)`.
    pub fn dquantile_dtau_fd(&self, x: &[f64], tau: &[f64], ctx: Option<&[f64]>, dim: usize, h: f64) -> Result<f64> {
        let n = self.spec.n;
        if dim >= n {
            return Err(Error::domain(format!("dimension {dim} out of range")));
        }
        let col = match self.spec.tau_mode {
            TauMode::PerDimension => dim,
            TauMode::Shared => 0,
        };
        let t0 = tau[col];
        if !(t0 > 0.0 && t0 < 1.0) {
            return Err(Error::domain(format!("tau {t0} must lie in (0, 1)")));
        }
        let mut h = h;
        while !(t0 - h > 0.0 && t0 + h < 1.0) {
            h *= 0.5;
        }
        let xt = Tensor::new(vec![2, n], [x, x].concat())?;
        let mut tt = Tensor::new(vec![2, n], [tau, tau].concat())?;
        tt.row_mut(0)[col] = t0 + h;
        tt.row_mut(1)[col] = t0 - h;
        let ct = ctx.map(|c| Tensor::new(vec![2, c.len()], [c, c].concat())).transpose()?;
        let q = self.forward_dim(&xt, &tt, ct.as_ref(), dim)?;
        Ok((q[0] - q[1]) / (2.0 * h))
    }

    fn run(
        &self,
        x: &Tensor,
        tau: &Tensor,
        ctx: Option<&Tensor>,
        only_dim: Option<usize>,
        keep: bool,
    ) -> (Vec<f64>, Option<Cache>) {
        let n = self.spec.n;
        let batch = x.rows();
        let c = self.spec.context_width;
        let blocks = self.spec.hidden.len();
        let tau_eff = self.effective_tau(tau);
        let tau_t: Vec<f64> = tau_eff.data().iter().map(|t| 2.0 * t - 1.0).collect();
        let ctx_data: Vec<f64> = ctx.map(|t| t.data().to_vec()).unwrap_or_default();

        let mut out = vec![0.0; batch * n];
        let bias = self.params.get(self.params.len() - 1).data();
        for b in 0..batch {
            for i in 0..n {
                if only_dim.is_none_or(|d| d == i) {
                    out[b * n + i] = bias[i];
                }
            }
        }

        let mut cache = keep.then(|| Cache {
            batch,
            inputs: Vec::with_capacity(blocks),
            trunk_tanh: Vec::with_capacity(blocks),
            trunk_sig: Vec::with_capacity(blocks),
            head_tanh: Vec::with_capacity(blocks),
            head_sig: Vec::with_capacity(blocks),
            tau_t: tau_t.clone(),
            ctx: ctx_data.clone(),
        });

        let mut input = x.data().to_vec();
        for k in 0..blocks {
            let width = self.spec.hidden[k];
            let fan_in = self.fan_in(k);
            let wf = self.masked_weight(k, W_F);
            let wg = self.masked_weight(k, W_G);
            let mut sf = vec![0.0; batch * width];
            let mut sg = vec![0.0; batch * width];
            gemm(batch, fan_in, width, 1.0, &input, fan_in, 1, &wf, 1, fan_in, 0.0, &mut sf, width, 1);
            gemm(batch, fan_in, width, 1.0, &input, fan_in, 1, &wg, 1, fan_in, 0.0, &mut sg, width, 1);

            let bf = self.param(k, B_F);
            let bg = self.param(k, B_G);
            let af = self.param(k, TAU_F);
            let ag = self.param(k, TAU_G);
            let readout = self.param(k, READOUT);
            let head_mask = self.masks.head[k].data();

            // Per-row constant part of the head pre-activations: bias plus context.
            let mut cf = vec![0.0; batch * width];
            let mut cg = vec![0.0; batch * width];
            for b in 0..batch {
                cf[b * width..(b + 1) * width].copy_from_slice(bf);
                cg[b * width..(b + 1) * width].copy_from_slice(bg);
            }
            if c > 0 {
                let wcf = self.param(k, CTX_F);
                let wcg = self.param(k, CTX_G);
                gemm(batch, c, width, 1.0, &ctx_data, c, 1, wcf, 1, c, 1.0, &mut cf, width, 1);
                gemm(batch, c, width, 1.0, &ctx_data, c, 1, wcg, 1, c, 1.0, &mut cg, width, 1);
            }

            let mut head_tanh = if keep { vec![0.0; batch * n * width] } else { Vec::new() };
            let mut head_sig = if keep { vec![0.0; batch * n * width] } else { Vec::new() };
            for b in 0..batch {
                let row = b * width..(b + 1) * width;
                let (sf_b, sg_b) = (&sf[row.clone()], &sg[row.clone()]);
                let (cf_b, cg_b) = (&cf[row.clone()], &cg[row]);
                for i in 0..n {
                    if only_dim.is_some_and(|d| d != i) {
                        continue;
                    }
                    let t = tau_t[b * n + i];
                    let hm = &head_mask[i * width..(i + 1) * width];
                    let ro = &readout[i * width..(i + 1) * width];
                    let mut acc = 0.0;
                    let off = (b * n + i) * width;
                    for u in 0..width {
                        let pf = hm[u] * sf_b[u] + cf_b[u] + af[u] * t;
                        let pg = hm[u] * sg_b[u] + cg_b[u] + ag[u] * t;
                        let th = tanh(pf);
                        let sg = sigmoid(pg);
                        acc += ro[u] * th * sg;
                        if keep {
                            head_tanh[off + u] = th;
                            head_sig[off + u] = sg;
                        }
                    }
                    out[b * n + i] += acc;
                }
            }

            let mut next = Vec::new();
            let (mut tt, mut ts) = (Vec::new(), Vec::new());
            if k + 1 < blocks {
                next = vec![0.0; batch * width];
                tt = vec![0.0; batch * width];
                ts = vec![0.0; batch * width];
                for b in 0..batch {
                    for u in 0..width {
                        let idx = b * width + u;
                        let th = tanh(sf[idx] + bf[u]);
                        let sg = sigmoid(sg[idx] + bg[u]);
                        tt[idx] = th;
                        ts[idx] = sg;
                        next[idx] = th * sg;
                    }
                }
            }
            if let Some(cache) = cache.as_mut() {
                cache.inputs.push(std::mem::take(&mut input));
                cache.trunk_tanh.push(tt);
                cache.trunk_sig.push(ts);
                cache.head_tanh.push(head_tanh);
                cache.head_sig.push(head_sig);
            }
            input = next;
        }
        (out, cache)
    }

    /// Reverse pass from an output cotangent `[batch, n]`. Returns parameter
    /// gradients and the cotangent of the effective levels `tau`.
    fn reverse(&self, cache: &Cache, dout: &[f64]) -> (ParamSet, Vec<f64>) {
        let n = self.spec.n;
        let batch = cache.batch;
        let c = self.spec.context_width;
        let blocks = self.spec.hidden.len();
        let mut grads = self.params.zeros_like();
        let mut dtau_t = vec![0.0; batch * n];

        {
            let gb = grads.get_mut(self.params.len() - 1).data_mut();
            for b in 0..batch {
                for i in 0..n {
                    gb[i] += dout[b * n + i];
                }
            }
        }

        let mut dh: Option<Vec<f64>> = None;
        for k in (0..blocks).rev() {
            let width = self.spec.hidden[k];
            let fan_in = self.fan_in(k);
            let af = self.param(k, TAU_F);
            let ag = self.param(k, TAU_G);
            let readout = self.param(k, READOUT);
            let head_mask = self.masks.head[k].data();
            let ht = &cache.head_tanh[k];
            let hs = &cache.head_sig[k];

            let mut dsf = vec![0.0; batch * width];
            let mut dsg = vec![0.0; batch * width];
            // Sum over positions of the head pre-activation cotangents (bias and context share them).
            let mut dpf_sum = vec![0.0; batch * width];
            let mut dpg_sum = vec![0.0; batch * width];
            let mut d_af = vec![0.0; width];
            let mut d_ag = vec![0.0; width];
            let mut d_ro = vec![0.0; n * width];

            for b in 0..batch {
                let row = b * width..(b + 1) * width;
                for i in 0..n {
                    let g = dout[b * n + i];
                    if g == 0.0 {
                        continue;
                    }
                    let t = cache.tau_t[b * n + i];
                    let off = (b * n + i) * width;
                    let hm = &head_mask[i * width..(i + 1) * width];
                    let ro = &readout[i * width..(i + 1) * width];
                    let dro = &mut d_ro[i * width..(i + 1) * width];
                    let dsf_b = &mut dsf[row.clone()];
                    let dsg_b = &mut dsg[row.clone()];
                    let dpf_b = &mut dpf_sum[row.clone()];
                    let dpg_b = &mut dpg_sum[row.clone()];
                    let mut dt = 0.0;
                    for u in 0..width {
                        let th = ht[off + u];
                        let sg = hs[off + u];
                        dro[u] += g * th * sg;
                        let dz = g * ro[u];
                        let dpf = dz * sg * (1.0 - th * th);
                        let dpg = dz * th * sg * (1.0 - sg);
                        dpf_b[u] += dpf;
                        dpg_b[u] += dpg;
                        dsf_b[u] += hm[u] * dpf;
                        dsg_b[u] += hm[u] * dpg;
                        d_af[u] += dpf * t;
                        d_ag[u] += dpg * t;
                        dt += dpf * af[u] + dpg * ag[u];
                    }
                    dtau_t[b * n + i] += 2.0 * dt;
                }
            }

            // Trunk output of this block feeds the next one.
            let mut dbf = vec![0.0; width];
            let mut dbg = vec![0.0; width];
            if let Some(dh) = dh.take() {
                let tt = &cache.trunk_tanh[k];
                let ts = &cache.trunk_sig[k];
                for idx in 0..batch * width {
                    let (th, sg) = (tt[idx], ts[idx]);
                    let daf = dh[idx] * sg * (1.0 - th * th);
                    let dag = dh[idx] * th * sg * (1.0 - sg);
                    dsf[idx] += daf;
                    dsg[idx] += dag;
                    dbf[idx % width] += daf;
                    dbg[idx % width] += dag;
                }
            }
            for b in 0..batch {
                for u in 0..width {
                    dbf[u] += dpf_sum[b * width + u];
                    dbg[u] += dpg_sum[b * width + u];
                }
            }

            let base = k * PARAMS_PER_BLOCK;
            let input = &cache.inputs[k];
            let mask = self.masks.trunk[k].data();
            for (j, ds) in [(W_F, &dsf), (W_G, &dsg)] {
                let gw = grads.get_mut(base + j).data_mut();
                // dW = dS^T · input
                gemm(width, batch, fan_in, 1.0, ds, 1, width, input, fan_in, 1, 0.0, gw, fan_in, 1);
                for (g, m) in gw.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            if c > 0 {
                for (j, dp) in [(CTX_F, &dpf_sum), (CTX_G, &dpg_sum)] {
                    let gw = grads.get_mut(base + j).data_mut();
                    gemm(width, batch, c, 1.0, dp, 1, width, &cache.ctx, c, 1, 0.0, gw, c, 1);
                }
            }
            grads.get_mut(base + B_F).data_mut().copy_from_slice(&dbf);
            grads.get_mut(base + B_G).data_mut().copy_from_slice(&dbg);
            grads.get_mut(base + TAU_F).data_mut().copy_from_slice(&d_af);
            grads.get_mut(base + TAU_G).data_mut().copy_from_slice(&d_ag);
            grads.get_mut(base + READOUT).data_mut().copy_from_slice(&d_ro);

            if k > 0 {
                let wf = self.masked_weight(k, W_F);
                let wg = self.masked_weight(k, W_G);
                let mut din = vec![0.0; batch * fan_in];
                gemm(batch, width, fan_in, 1.0, &dsf, width, 1, &wf, fan_in, 1, 0.0, &mut din, fan_in, 1);
                gemm(batch, width, fan_in, 1.0, &dsg, width, 1, &wg, fan_in, 1, 1.0, &mut din, fan_in, 1);
                dh = Some(din);
            }
        }
        (grads, dtau_t)
    }
}
