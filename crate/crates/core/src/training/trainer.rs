use std::io::Write;

use super::checkpoint::Checkpoint;
use super::config::{OptimizerKind, TrainConfig};
use super::optim::{optimizer_step, polyak_update, OptimizerState};
use crate::error::{Error, Result};
use crate::network::{AiqnModel, ParamSet};
use crate::numerics::{Rng, Tensor};

/// Rows of a held-out batch drawn once for the built-in Polyak loss metric.
const EVAL_BATCH: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub metric: Option<(String, f64)>,
}

/// One row per step with the training loss, plus one row per metric at
/// evaluation steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricRow>,
}

impl MetricsLog {
    /// Training loss of every step, in order.
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.metric.is_none()).map(|r| r.loss).collect()
    }

    /// Last recorded value of `name`.
    pub fn last_metric(&self, name: &str) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| match &r.metric {
            Some((n, v)) if n == name => Some(*v),
            _ => None,
        })
    }

    /// CSV with header `step,loss,metric_name,metric_value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::io("<metrics>", std::io::Error::other(e));
        out.write_record(["step", "loss", "metric_name", "metric_value"]).map_err(csv_err)?;
        for r in &self.rows {
            let (name, value) = match &r.metric {
                Some((n, v)) => (n.clone(), v.to_string()),
                None => (String::new(), String::new()),
            };
            out.write_record([r.step.to_string(), r.loss.to_string(), name, value]).map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<metrics>", e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII CSV")
    }
}

/// Extra metrics computed from the Polyak-averaged model at evaluation steps.
pub type Evaluator<'a> = dyn FnMut(&AiqnModel, usize) -> Result<Vec<(String, f64)>> + 'a;

/// Quantile-regression training state. A failed [`Trainer::step`] leaves the
/// state as it was, so [`Trainer::checkpoint`] then returns the last good
/// parameters.
pub struct Trainer {
    model: AiqnModel,
    polyak: ParamSet,
    opt: OptimizerState,
    cfg: TrainConfig,
    step: usize,
    batch_rng: Rng,
    tau_rng: Rng,
    eval_batch: Option<(Vec<usize>, Tensor)>,
    log: MetricsLog,
}

fn check_data(model: &AiqnModel, data: &Tensor, ctx: Option<&Tensor>) -> Result<()> {
    if data.rank() != 2 || data.rows() == 0 {
        return Err(Error::config("training data must be a nonempty matrix"));
    }
    if data.cols() != model.n() {
        return Err(Error::config(format!(
            "data has {} columns but the model has {} dimensions",
            data.cols(),
            model.n()
        )));
    }
    let c = model.spec().context_width;
    match ctx {
        Some(t) if t.shape() != [data.rows(), c] => {
            Err(Error::config(format!("context has shape {:?}, expected [{}, {c}]", t.shape(), data.rows())))
        }
        None if c > 0 => Err(Error::config("model expects a context for every example")),
        _ => Ok(()),
    }
}

impl Trainer {
    pub fn new(model: AiqnModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        Ok(Self {
            polyak: model.params().clone(),
            opt: OptimizerState::new(cfg.optimizer, model.params()),
            batch_rng: root.fork(1),
            tau_rng: root.fork(2),
            eval_batch: None,
            model,
            cfg,
            step: 0,
            log: MetricsLog::default(),
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn into_log(self) -> MetricsLog {
        self.log
    }

    /// Current raw parameters.
    pub fn raw_model(&self) -> &AiqnModel {
        &self.model
    }

    /// Model carrying the Polyak average, used for all evaluation.
    pub fn polyak_model(&self) -> AiqnModel {
        self.model.with_params(self.polyak.clone()).expect("same layout")
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, self.polyak.clone(), self.opt.clone(), self.cfg.clone(), self.step)
    }

    /// One optimizer step on a fresh minibatch; returns the batch loss.
    pub fn step(&mut self, data: &Tensor, ctx: Option<&Tensor>) -> Result<f64> {
        check_data(&self.model, data, ctx)?;
        let next = self.step + 1;
        let n = self.model.n();
        let b = self.cfg.batch_size;
        let t = self.cfg.tau_samples;
        // Draw into clones so a failed step leaves the streams untouched.
        let mut batch_rng = self.batch_rng.clone();
        let mut tau_rng = self.tau_rng.clone();
        let rows: Vec<usize> = (0..b).map(|_| batch_rng.below(data.rows())).collect();
        // Each example is repeated once per tau draw; the mean loss averages over draws.
        let rows: Vec<usize> = (0..t).flat_map(|_| rows.iter().copied()).collect();
        let x = data.select_rows(&rows);
        let c = ctx.map(|c| c.select_rows(&rows));
        let tau_data: Vec<f64> = (0..rows.len() * n).map(|_| tau_rng.uniform()).collect();
        let tau = Tensor::new(vec![rows.len(), n], tau_data)?;

        let (loss, grads) = self.model.loss_and_grads(&x, &tau, &x, self.cfg.loss_config(), c.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::Training { step: next, reason: format!("non-finite loss {loss}") });
        }
        // Only plain SGD can overflow from finite gradients; keep a copy to roll back.
        let backup = (self.opt.kind == OptimizerKind::Sgd).then(|| self.model.params().clone());
        let lr = self.cfg.lr_at(next);
        let mut opt = self.opt.clone();
        optimizer_step(self.model.params_mut(), &grads, &mut opt, lr)?;
        if !self.model.params().is_finite() {
            if let Some(p) = backup {
                self.model.set_params(p)?;
            }
            return Err(Error::Training { step: next, reason: "parameters became non-finite".into() });
        }
        self.opt = opt;
        polyak_update(&mut self.polyak, self.model.params(), self.cfg.polyak)?;
        self.batch_rng = batch_rng;
        self.tau_rng = tau_rng;
        self.step = next;
        self.log.rows.push(MetricRow { step: next, loss, metric: None });
        Ok(loss)
    }

    /// Loss of the Polyak model on a fixed held-out batch with fixed `tau`.
    pub fn polyak_loss(&mut self, data: &Tensor, ctx: Option<&Tensor>) -> Result<f64> {
        let n = self.model.n();
        let (rows, tau) = self
            .eval_batch
            .get_or_insert_with(|| {
                let mut rng = Rng::new(self.cfg.seed).fork(3);
                let rows: Vec<usize> = (0..EVAL_BATCH.min(data.rows())).map(|_| rng.below(data.rows())).collect();
                let tau = (0..rows.len() * n).map(|_| rng.uniform()).collect();
                let tau = Tensor::new(vec![rows.len(), n], tau).expect("uniform draws are finite");
                (rows, tau)
            })
            .clone();
        let x = data.select_rows(&rows);
        let c = ctx.map(|c| c.select_rows(&rows));
        let model = self.polyak_model();
        let pred = model.forward(&x, &tau, c.as_ref())?;
        let tau_eff = model.effective_tau(&tau);
        Ok(crate::losses::batch_quantile_loss(&pred, &x, &tau_eff, self.cfg.loss_config())?.0)
    }

    /// Runs the remaining steps, evaluating every `eval_interval` steps and
    /// after the last one.
    pub fn run(
        &mut self,
        data: &Tensor,
        ctx: Option<&Tensor>,
        mut evaluator: Option<&mut Evaluator<'_>>,
    ) -> Result<()> {
        check_data(&self.model, data, ctx)?;
        while self.step < self.cfg.steps {
            let loss = self.step(data, ctx)?;
            let at_interval = self.cfg.eval_interval > 0 && self.step.is_multiple_of(self.cfg.eval_interval);
            if at_interval || self.step == self.cfg.steps {
                let mut metrics = vec![("polyak_loss".to_string(), self.polyak_loss(data, ctx)?)];
                if let Some(eval) = evaluator.as_deref_mut() {
                    metrics.extend(eval(&self.polyak_model(), self.step)?);
                }
                for (name, value) in metrics {
                    self.log.rows.push(MetricRow { step: self.step, loss, metric: Some((name, value)) });
                }
            }
        }
        Ok(())
    }
}

/// Trains `model` on the rows of `data` for `cfg.steps` steps.
pub fn train(
    model: AiqnModel,
    data: &Tensor,
    ctx: Option<&Tensor>,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, MetricsLog)> {
    let mut trainer = Trainer::new(model, cfg.clone())?;
    trainer.run(data, ctx, None)?;
    let ckpt = trainer.checkpoint();
    Ok((ckpt, trainer.into_log()))
}
