use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::{LossConfig, DEFAULT_KAPPA};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    RmsProp,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Optimization settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// `(step, lr)` pairs in increasing step order: from `step` on the rate is `lr`.
    pub lr_milestones: Vec<(usize, f64)>,
    pub kappa: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Weight `w` of the running average `avg = w avg + (1 - w) params`.
    pub polyak: f64,
    /// Evaluate every this many steps; 0 evaluates only after the last step.
    pub eval_interval: usize,
    pub seed: u64,
    /// Independent `tau` draws per example, averaged in the loss.
    pub tau_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-4,
            lr_milestones: Vec::new(),
            kappa: DEFAULT_KAPPA,
            batch_size: 64,
            steps: 20_000,
            polyak: 0.9999,
            eval_interval: 1000,
            seed: 0,
            tau_samples: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        if self.steps < 1 {
            return bad("steps must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.polyak) {
            return bad(format!("polyak must lie in [0, 1), got {}", self.polyak));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be finite and >= 0, got {}", self.kappa));
        }
        if self.tau_samples < 1 {
            return bad("tau_samples must be >= 1".into());
        }
        for w in self.lr_milestones.windows(2) {
            if w[1].0 <= w[0].0 {
                return bad("lr_milestones must have increasing steps".into());
            }
        }
        if let Some((_, lr)) = self.lr_milestones.iter().find(|(_, lr)| !(*lr > 0.0 && lr.is_finite())) {
            return bad(format!("milestone learning rate must be > 0, got {lr}"));
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig { kappa: self.kappa }
    }

    /// Learning rate in effect at 1-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr_milestones.iter().rev().find(|(s, _)| step >= *s).map_or(self.learning_rate, |&(_, lr)| lr)
    }

    /// Piecewise-constant decay 1e-4 → 3e-5 → 1e-5 with the given boundaries.
    pub fn with_decaying_schedule(mut self, first: usize, second: usize) -> Self {
        self.learning_rate = 1e-4;
        self.lr_milestones = vec![(first, 3e-5), (second, 1e-5)];
        self
    }
}
