//! Binary checkpoint: magic `AIQN`, `u32` version, a length-prefixed
//! `key=value` metadata block, a `u32` tensor count and length-prefixed named
//! tensors (`u32` rank, `u64` dims, little-endian `f64` data).

use std::path::Path;

use super::config::{OptimizerKind, TrainConfig};
use super::optim::OptimizerState;
use crate::binio::{join, meta_get, meta_parse, split_list, Reader, Writer};
use crate::error::{Error, Result};
use crate::network::{AiqnModel, ModelSpec, ParamSet, TauMode};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AIQN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    /// Hidden-unit degrees; they determine the masks.
    pub degrees: Vec<Vec<usize>>,
    pub params: ParamSet,
    pub polyak: ParamSet,
    pub optimizer: OptimizerState,
    pub config: TrainConfig,
    pub step: usize,
    pub seed: u64,
    /// Free-form `key=value` pairs carried along (task description, data scale).
    pub extra: Vec<(String, String)>,
}

fn degrees_of(model: &AiqnModel) -> Vec<Vec<usize>> {
    model.masks().degrees.clone()
}

impl Checkpoint {
    pub fn new(
        model: &AiqnModel,
        polyak: ParamSet,
        optimizer: OptimizerState,
        config: TrainConfig,
        step: usize,
    ) -> Self {
        Self {
            spec: model.spec().clone(),
            degrees: degrees_of(model),
            params: model.params().clone(),
            polyak,
            seed: config.seed,
            optimizer,
            config,
            step,
            extra: Vec::new(),
        }
    }

    /// Model with the raw training parameters.
    pub fn raw_model(&self) -> Result<AiqnModel> {
        AiqnModel::from_parts(self.spec.clone(), self.degrees.clone(), self.params.clone())
    }

    /// Model with the Polyak-averaged parameters, used for sampling and evaluation.
    pub fn model(&self) -> Result<AiqnModel> {
        AiqnModel::from_parts(self.spec.clone(), self.degrees.clone(), self.polyak.clone())
    }

    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let s = &self.spec;
        let c = &self.config;
        let milestones: Vec<String> = c.lr_milestones.iter().map(|(st, lr)| format!("{st}:{lr:?}")).collect();
        let mut meta: Vec<(String, String)> = [
            ("n", s.n.to_string()),
            ("hidden", join(&s.hidden)),
            ("ordering", join(&s.ordering)),
            ("context_width", s.context_width.to_string()),
            ("tau_mode", s.tau_mode.as_str().to_string()),
            ("autoregressive", s.autoregressive.to_string()),
            ("optimizer", c.optimizer.as_str().to_string()),
            ("learning_rate", format!("{:?}", c.learning_rate)),
            ("lr_milestones", milestones.join(",")),
            ("kappa", format!("{:?}", c.kappa)),
            ("batch_size", c.batch_size.to_string()),
            ("steps", c.steps.to_string()),
            ("polyak", format!("{:?}", c.polyak)),
            ("eval_interval", c.eval_interval.to_string()),
            ("tau_samples", c.tau_samples.to_string()),
            ("config_seed", c.seed.to_string()),
            ("optimizer_step", self.optimizer.step.to_string()),
            ("step", self.step.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        meta.extend(self.extra.iter().map(|(k, v)| (format!("extra.{k}"), v.clone())));
        meta
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.meta(&self.metadata());
        let groups: [(&str, &ParamSet); 4] = [
            ("params", &self.params),
            ("polyak", &self.polyak),
            ("opt_first", &self.optimizer.first),
            ("opt_second", &self.optimizer.second),
        ];
        let count = self.degrees.len() + groups.iter().map(|(_, p)| p.len()).sum::<usize>();
        w.u32(count as u32);
        for (k, deg) in self.degrees.iter().enumerate() {
            w.string(&format!("degrees/{k}"));
            let values: Vec<f64> = deg.iter().map(|&d| d as f64).collect();
            w.tensor(&Tensor::new(vec![deg.len()], values).expect("finite degrees"));
        }
        for (prefix, set) in groups {
            for (name, t) in set.iter() {
                w.string(&format!("{prefix}/{name}"));
                w.tensor(t);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(at, format!("unsupported checkpoint version {version}")));
        }
        let meta = r.meta()?;
        let count = r.u32("tensor count")? as usize;
        let mut named = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let t = r.tensor()?;
            named.push((name, t));
        }
        r.expect_end()?;

        let list = |key: &str| -> Result<Vec<usize>> {
            split_list(meta_get(&meta, key)?).ok_or_else(|| Error::format(0, format!("bad list in {key:?}")))
        };
        let tau_mode: TauMode = meta_get(&meta, "tau_mode")?.parse().map_err(|_| Error::format(0, "bad tau_mode"))?;
        let optimizer: OptimizerKind =
            meta_get(&meta, "optimizer")?.parse().map_err(|_| Error::format(0, "bad optimizer"))?;
        let spec = ModelSpec {
            n: meta_parse(&meta, "n")?,
            hidden: list("hidden")?,
            ordering: list("ordering")?,
            context_width: meta_parse(&meta, "context_width")?,
            tau_mode,
            autoregressive: meta_parse(&meta, "autoregressive")?,
        };
        let mut lr_milestones = Vec::new();
        let raw = meta_get(&meta, "lr_milestones")?;
        for item in raw.split(',').filter(|s| !s.is_empty()) {
            let parsed = item.split_once(':').and_then(|(s, lr)| Some((s.parse().ok()?, lr.parse().ok()?)));
            lr_milestones.push(parsed.ok_or_else(|| Error::format(0, format!("bad lr milestone {item:?}")))?);
        }
        let config = TrainConfig {
            optimizer,
            learning_rate: meta_parse(&meta, "learning_rate")?,
            lr_milestones,
            kappa: meta_parse(&meta, "kappa")?,
            batch_size: meta_parse(&meta, "batch_size")?,
            steps: meta_parse(&meta, "steps")?,
            polyak: meta_parse(&meta, "polyak")?,
            eval_interval: meta_parse(&meta, "eval_interval")?,
            seed: meta_parse(&meta, "config_seed")?,
            tau_samples: meta_parse(&meta, "tau_samples")?,
        };
        let extra =
            meta.iter().filter_map(|(k, v)| k.strip_prefix("extra.").map(|k| (k.to_string(), v.clone()))).collect();

        let mut degrees = Vec::new();
        let mut groups: [ParamSet; 4] = Default::default();
        let prefixes = ["params/", "polyak/", "opt_first/", "opt_second/"];
        for (name, t) in named {
            if let Some(k) = name.strip_prefix("degrees/") {
                if k != degrees.len().to_string() {
                    return Err(Error::format(0, format!("unexpected degree block {name:?}")));
                }
                degrees.push(t.data().iter().map(|&d| d as usize).collect());
            } else if let Some(g) = prefixes.iter().position(|p| name.starts_with(p)) {
                groups[g].push(&name[prefixes[g].len()..], t);
            } else {
                return Err(Error::format(0, format!("unexpected tensor {name:?}")));
            }
        }
        let [params, polyak, first, second] = groups;
        // Validates shapes, masks and parameter layout.
        let model = AiqnModel::from_parts(spec.clone(), degrees.clone(), params.clone())
            .map_err(|e| Error::format(0, format!("inconsistent checkpoint: {e}")))?;
        for set in [&polyak, &first, &second] {
            model.params().check_layout(set).map_err(|e| Error::format(0, format!("inconsistent checkpoint: {e}")))?;
        }
        Ok(Self {
            spec,
            degrees,
            params,
            polyak,
            optimizer: OptimizerState { kind: optimizer, step: meta_parse(&meta, "optimizer_step")?, first, second },
            config,
            step: meta_parse(&meta, "step")?,
            seed: meta_parse(&meta, "seed")?,
            extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
