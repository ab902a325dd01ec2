//! Flat `key = value` experiment configuration.
//!
//! Blank lines are skipped and `#` starts a comment. Every key may appear at
//! most once and unknown keys are rejected. [`ExperimentConfig::to_text`]
//! writes every key, so its output parses back to an equal config.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::binio::{join, split_list};
use crate::error::{Error, Result};
use crate::network::{default_hidden, ModelSpec, TauMode};
use crate::numerics::AnalyticDist;
use crate::training::{OptimizerKind, TrainConfig};

use super::data::Bars;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ScalarAnalytic,
    MultivariateGaussian,
    Bars8x8,
    ExternalIdx,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::ScalarAnalytic => "scalar-analytic",
            Task::MultivariateGaussian => "multivariate-gaussian",
            Task::Bars8x8 => "bars8x8",
            Task::ExternalIdx => "external-idx",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Task::ScalarAnalytic, Task::MultivariateGaussian, Task::Bars8x8, Task::ExternalIdx]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarFamily {
    Gaussian,
    Uniform,
    Exponential,
}

impl ScalarFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScalarFamily::Gaussian => "gaussian",
            ScalarFamily::Uniform => "uniform",
            ScalarFamily::Exponential => "exponential",
        }
    }
}

impl FromStr for ScalarFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ScalarFamily::Gaussian),
            "uniform" => Ok(ScalarFamily::Uniform),
            "exponential" => Ok(ScalarFamily::Exponential),
            other => Err(Error::config(format!("unknown distribution {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Family of the scalar-analytic task.
    pub distribution: ScalarFamily,
    /// Gaussian mean; also the marginal mean of the multivariate task.
    pub mean: f64,
    /// Gaussian standard deviation; also the multivariate marginal one.
    pub std: f64,
    pub low: f64,
    pub high: f64,
    pub rate: f64,
    pub dim: usize,
    pub correlation: f64,
    pub idx_path: Option<PathBuf>,
    /// Rows to generate; `None` picks a per-task default.
    pub examples: Option<usize>,
    /// Dataset file; `None` means `<out>/data.aiqt`.
    pub data_path: Option<PathBuf>,
    /// `None` picks the default architecture for the data dimension.
    pub hidden: Option<Vec<usize>>,
    /// `None` is the identity (raster) ordering.
    pub ordering: Option<Vec<usize>>,
    pub tau_mode: TauMode,
    pub autoregressive: bool,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::ScalarAnalytic,
            distribution: ScalarFamily::Gaussian,
            mean: 3.0,
            std: 2.0,
            low: 0.0,
            high: 1.0,
            rate: 1.0,
            dim: 2,
            correlation: 0.8,
            idx_path: None,
            examples: None,
            data_path: None,
            hidden: None,
            ordering: None,
            tau_mode: TauMode::PerDimension,
            autoregressive: true,
            train: TrainConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::config(format!("{key}: cannot parse {raw:?}")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>> {
    split_list(raw).ok_or_else(|| Error::config(format!("{key}: expected a comma-separated list, got {raw:?}")))
}

fn optional_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn parse_milestones(raw: &str) -> Result<Vec<(usize, f64)>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|item| {
            let (s, lr) = item
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::config(format!("lr_milestones: expected step:rate, got {item:?}")))?;
            Ok((parse("lr_milestones", s.trim())?, parse("lr_milestones", lr.trim())?))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            cfg.set(key, value)?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "task" => self.task = v.parse()?,
            "distribution" => self.distribution = v.parse()?,
            "mean" => self.mean = parse(key, v)?,
            "std" => self.std = parse(key, v)?,
            "low" => self.low = parse(key, v)?,
            "high" => self.high = parse(key, v)?,
            "rate" => self.rate = parse(key, v)?,
            "dim" => self.dim = parse(key, v)?,
            "correlation" => self.correlation = parse(key, v)?,
            "idx_path" => self.idx_path = optional_path(v),
            "examples" => self.examples = if v == "auto" { None } else { Some(parse(key, v)?) },
            "data_path" => self.data_path = optional_path(v),
            "hidden" => self.hidden = if v == "auto" { None } else { Some(parse_list(key, v)?) },
            "ordering" => self.ordering = if v == "identity" { None } else { Some(parse_list(key, v)?) },
            "tau_mode" => self.tau_mode = v.parse().map_err(|_| Error::config(format!("unknown tau_mode {v:?}")))?,
            "autoregressive" => self.autoregressive = parse(key, v)?,
            "optimizer" => self.train.optimizer = v.parse::<OptimizerKind>()?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "lr_milestones" => self.train.lr_milestones = parse_milestones(v)?,
            "kappa" => self.train.kappa = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "steps" => self.train.steps = parse(key, v)?,
            "polyak" => self.train.polyak = parse(key, v)?,
            "eval_interval" => self.train.eval_interval = parse(key, v)?,
            "tau_samples" => self.train.tau_samples = parse(key, v)?,
            "seed" => self.train.seed = parse(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Every key, with per-task defaults resolved where the data dimension
    /// is known without reading files.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let hidden = match (&self.hidden, self.known_n()) {
            (Some(h), _) => join(h),
            (None, Some(n)) => join(&default_hidden(n)),
            (None, None) => "auto".into(),
        };
        let milestones: Vec<String> = t.lr_milestones.iter().map(|(s, lr)| format!("{s}:{lr:?}")).collect();
        let lines = [
            ("task", self.task.to_string()),
            ("distribution", self.distribution.as_str().into()),
            ("mean", format!("{:?}", self.mean)),
            ("std", format!("{:?}", self.std)),
            ("low", format!("{:?}", self.low)),
            ("high", format!("{:?}", self.high)),
            ("rate", format!("{:?}", self.rate)),
            ("dim", self.dim.to_string()),
            ("correlation", format!("{:?}", self.correlation)),
            ("idx_path", path(&self.idx_path)),
            ("examples", self.examples().map_or("auto".into(), |e| e.to_string())),
            ("data_path", self.data_path().display().to_string()),
            ("hidden", hidden),
            ("ordering", self.ordering.as_ref().map_or("identity".into(), |o| join(o))),
            ("tau_mode", self.tau_mode.as_str().into()),
            ("autoregressive", self.autoregressive.to_string()),
            ("optimizer", t.optimizer.to_string()),
            ("learning_rate", format!("{:?}", t.learning_rate)),
            ("lr_milestones", milestones.join(",")),
            ("kappa", format!("{:?}", t.kappa)),
            ("batch_size", t.batch_size.to_string()),
            ("steps", t.steps.to_string()),
            ("polyak", format!("{:?}", t.polyak)),
            ("eval_interval", t.eval_interval.to_string()),
            ("tau_samples", t.tau_samples.to_string()),
            ("seed", t.seed.to_string()),
            ("out", self.out.display().to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Data dimension implied by the task alone.
    pub fn known_n(&self) -> Option<usize> {
        match self.task {
            Task::ScalarAnalytic => Some(1),
            Task::MultivariateGaussian => Some(self.dim),
            Task::Bars8x8 => Some(Bars::N),
            Task::ExternalIdx => None,
        }
    }

    /// Rows to generate; external data defaults to every image in the file.
    pub fn examples(&self) -> Option<usize> {
        self.examples.or(match self.task {
            Task::ScalarAnalytic => Some(100_000),
            Task::MultivariateGaussian => Some(10_000),
            Task::Bars8x8 => Some(5_000),
            Task::ExternalIdx => None,
        })
    }

    pub fn data_path(&self) -> PathBuf {
        self.data_path.clone().unwrap_or_else(|| self.out.join("data.aiqt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out.join("checkpoint.aiqn")
    }

    pub fn scalar_dist(&self) -> Result<AnalyticDist> {
        let d = match self.distribution {
            ScalarFamily::Gaussian => AnalyticDist::gaussian(self.mean, self.std),
            ScalarFamily::Uniform => AnalyticDist::uniform(self.low, self.high),
            ScalarFamily::Exponential => AnalyticDist::exponential(self.rate),
        };
        d.map_err(|e| Error::config(e.to_string()))
    }

    /// Analytic marginals of the synthetic tasks, for the evaluation suite.
    pub fn truth_marginals(&self) -> Result<Vec<Option<AnalyticDist>>> {
        Ok(match self.task {
            Task::ScalarAnalytic => vec![Some(self.scalar_dist()?)],
            Task::MultivariateGaussian => {
                let g = AnalyticDist::gaussian(self.mean, self.std).map_err(|e| Error::config(e.to_string()))?;
                vec![Some(g); self.dim]
            }
            Task::Bars8x8 | Task::ExternalIdx => Vec::new(),
        })
    }

    pub fn model_spec(&self, n: usize) -> ModelSpec {
        let mut spec = ModelSpec::new(n).with_tau_mode(self.tau_mode).with_autoregressive(self.autoregressive);
        if let Some(h) = &self.hidden {
            spec = spec.with_hidden(h.clone());
        }
        if let Some(o) = &self.ordering {
            spec = spec.with_ordering(o.clone());
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match self.task {
            Task::ScalarAnalytic => {
                self.scalar_dist()?;
            }
            Task::MultivariateGaussian => {
                if self.dim == 0 {
                    return Err(Error::config("dim must be at least 1"));
                }
                if !(0.0..1.0).contains(&self.correlation) {
                    return Err(Error::config(format!("correlation must lie in [0, 1), got {}", self.correlation)));
                }
            }
            Task::Bars8x8 => {}
            Task::ExternalIdx => {
                if self.idx_path.is_none() {
                    return Err(Error::config("task external-idx needs idx_path"));
                }
            }
        }
        if self.examples == Some(0) {
            return Err(Error::config("examples must be at least 1"));
        }
        if let Some(h) = &self.hidden {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::config(format!("hidden sizes must be positive, got {h:?}")));
            }
        }
        if let (Some(o), Some(n)) = (&self.ordering, self.known_n()) {
            if o.len() != n {
                return Err(Error::config(format!("ordering has {} entries, data has {n} dimensions", o.len())));
            }
        }
        Ok(())
    }
}
