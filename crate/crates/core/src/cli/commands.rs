use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Task};
use super::data::{mvn_dataset, scalar_dataset, Bars};
use super::formats::{parse_idx, write_pgm, TensorFile};
use super::{Cli, Command};
use crate::divergence::{quantile_divergence, QuantileFn};
use crate::error::{Error, Result};
use crate::network::{AiqnModel, TauMode};
use crate::numerics::{Rng, Tensor};
use crate::sampling::{eval_suite, inpaint, sample, EvalOptions, InpaintRequest, MetricTable, SampleRequest};
use crate::training::{
    grad_check, synthetic_batch, Checkpoint, Fault, GradCheckOptions, GradCheckReport, MetricsLog, Trainer,
};

/// Largest relative gradient error `gradcheck` accepts.
const GRADCHECK_TOL: f64 = 1e-4;

/// Rows in the synthetic `gradcheck` batch.
const GRADCHECK_BATCH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The command ran but its check did not pass.
    CheckFailed,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub(super) fn dispatch(cli: &Cli) -> Result<Outcome> {
    let cfg = resolve(cli)?;
    if cli.dry_run {
        print!("{}", cfg.to_text());
        return Ok(Outcome::Success);
    }
    match &cli.command {
        Command::GenData => {
            let path = cmd_gen_data(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Train => {
            let (ckpt, log) = cmd_train(&cfg)?;
            let losses = log.losses();
            let tail = &losses[losses.len().saturating_sub(100)..];
            println!("steps: {}", ckpt.step);
            println!("final loss (mean of last {}): {:.6}", tail.len(), tail.iter().sum::<f64>() / tail.len() as f64);
            for name in ["polyak_loss", "qdiv"] {
                if let Some(v) = log.last_metric(name) {
                    println!("{name}: {v:.6}");
                }
            }
            println!("wrote {}", cfg.checkpoint_path().display());
        }
        Command::Sample(a) => {
            let mode = a.tau_mode.as_deref().map(str::parse::<TauMode>).transpose()?;
            let ckpt = a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path());
            let s = cmd_sample(&cfg, &ckpt, a.count, mode)?;
            println!("wrote {} samples to {}", s.rows(), cfg.out.display());
        }
        Command::Inpaint(a) => {
            let ckpt = a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path());
            let source = a.source.clone().unwrap_or_else(|| cfg.data_path());
            let known = parse_positions(&a.known)?;
            let s = cmd_inpaint(&cfg, &ckpt, &known, &source, a.row, a.count)?;
            println!("wrote {} completions to {}", s.rows(), cfg.out.display());
        }
        Command::Eval(a) => {
            let ckpt = a.checkpoint.clone().unwrap_or_else(|| cfg.checkpoint_path());
            let data = a.data.clone().unwrap_or_else(|| cfg.data_path());
            let table = cmd_eval(&cfg, &ckpt, &data, a.samples)?;
            print!("{}", table.to_csv_string());
        }
        Command::Gradcheck(a) => {
            let report = cmd_gradcheck(&cfg, a.inject_fault)?;
            println!(
                "max relative error {:.3e} at {} (analytic {:.6e}, numeric {:.6e}, {} entries checked)",
                report.max_rel_error, report.worst, report.analytic, report.numeric, report.checked
            );
            if !(report.max_rel_error <= GRADCHECK_TOL) {
                println!("FAILED: tolerance {GRADCHECK_TOL:e}");
                return Ok(Outcome::CheckFailed);
            }
        }
    }
    Ok(Outcome::Success)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

/// Positions as a comma-separated list of indices and inclusive `a-b` ranges.
pub fn parse_positions(raw: &str) -> Result<Vec<usize>> {
    let bad = || Error::config(format!("cannot parse positions {raw:?}; use e.g. 0-31 or 0,1,2"));
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) =
                    (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

fn load_data(path: &Path) -> Result<TensorFile> {
    if !path.exists() {
        return Err(Error::config(format!("dataset file not found: {}", path.display())));
    }
    let file = TensorFile::load(path)?;
    if file.tensor.rank() != 2 || file.tensor.rows() == 0 {
        return Err(Error::format(0, format!("{}: expected a nonempty [rows, n] tensor", path.display())));
    }
    Ok(file)
}

fn check_n(cfg: &ExperimentConfig, n: usize) -> Result<()> {
    match cfg.known_n() {
        Some(k) if k != n => Err(Error::config(format!("task {} has n = {k} but the data has n = {n}", cfg.task))),
        _ => Ok(()),
    }
}

/// Generates (or ingests) the configured dataset into `cfg.data_path()`. The
/// file records the seed, the task and, for images, the height and width.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let mut rng = Rng::new(seed);
    let count = cfg.examples();
    let mut file = match cfg.task {
        Task::ScalarAnalytic => TensorFile::new(scalar_dataset(&cfg.scalar_dist()?, count.unwrap_or(0), &mut rng)),
        Task::MultivariateGaussian => {
            TensorFile::new(mvn_dataset(cfg.dim, cfg.mean, cfg.std, cfg.correlation, count.unwrap_or(0), &mut rng)?)
        }
        Task::Bars8x8 => TensorFile::new(Bars::dataset(count.unwrap_or(0), &mut rng))
            .with_meta("height", Bars::SIDE)
            .with_meta("width", Bars::SIDE),
        Task::ExternalIdx => {
            let path = cfg.idx_path.as_ref().expect("validated");
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let (mut t, item) = parse_idx(&bytes)?;
            if let Some(c) = count {
                t = t.select_rows(&(0..c.min(t.rows())).collect::<Vec<_>>());
            }
            let file = TensorFile::new(t);
            match item[..] {
                [h, w] => file.with_meta("height", h).with_meta("width", w),
                _ => file,
            }
        }
    };
    if file.tensor.rows() == 0 {
        return Err(Error::config("dataset would be empty"));
    }
    file = file.with_meta("seed", seed).with_meta("task", cfg.task);
    let path = cfg.data_path();
    create_parent(&path)?;
    file.save(&path)?;
    Ok(path)
}

/// Trains on the dataset and writes `checkpoint.aiqn` and `metrics.csv` into
/// the output directory. Scalar-analytic runs also log `qdiv`, the quantile
/// divergence of the Polyak model against the analytic law, at evaluation
/// steps. If training aborts, the last good state is still written.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<(Checkpoint, MetricsLog)> {
    cfg.validate()?;
    let file = load_data(&cfg.data_path())?;
    let data = &file.tensor;
    let n = data.cols();
    check_n(cfg, n)?;
    if cfg.ordering.as_ref().is_some_and(|o| o.len() != n) {
        return Err(Error::config(format!("ordering does not have {n} entries")));
    }
    let model = AiqnModel::new(cfg.model_spec(n), &mut Rng::new(cfg.train.seed).fork(100))?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let truth = match cfg.task {
        Task::ScalarAnalytic => Some(cfg.scalar_dist()?),
        _ => None,
    };
    let mut qdiv = |m: &AiqnModel, _step: usize| -> Result<Vec<(String, f64)>> {
        let Some(p) = &truth else { return Ok(Vec::new()) };
        let x = Tensor::zeros(vec![1, 1]);
        let q = QuantileFn::new(
            |t| m.forward_dim(&x, &Tensor::filled(vec![1, 1], t), None, 0).map_or(f64::NAN, |v| v[0]),
            false,
        )?;
        Ok(vec![("qdiv".to_string(), quantile_divergence(p, &q, 1e-7)?)])
    };
    let result = trainer.run(data, None, Some(&mut qdiv));
    let mut ckpt = trainer.checkpoint();
    ckpt.extra.push(("task".into(), cfg.task.to_string()));
    if let Some((h, w)) = file.image_size() {
        ckpt.extra.push(("height".into(), h.to_string()));
        ckpt.extra.push(("width".into(), w.to_string()));
    }
    create_dir(&cfg.out)?;
    ckpt.save(&cfg.checkpoint_path())?;
    let log = trainer.into_log();
    let csv_path = cfg.out.join("metrics.csv");
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    log.write_csv(std::io::BufWriter::new(f))?;
    result?;
    Ok((ckpt, log))
}

fn image_size(ckpt: &Checkpoint) -> Option<(usize, usize)> {
    let (h, w) = (ckpt.extra("height")?.parse().ok()?, ckpt.extra("width")?.parse().ok()?);
    (h * w == ckpt.spec.n).then_some((h, w))
}

fn write_images(dir: &Path, stem: &str, rows: &Tensor, size: Option<(usize, usize)>) -> Result<()> {
    if let Some((h, w)) = size {
        for r in 0..rows.rows() {
            write_pgm(&dir.join(format!("{stem}_{r:03}.pgm")), rows.row(r), h, w)?;
        }
    }
    Ok(())
}

/// Writes `samples.aiqt` and, for image checkpoints, `sample_NNN.pgm` files
/// (clamped to `[0, 1]` only in the images).
pub fn cmd_sample(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    count: usize,
    tau_mode: Option<TauMode>,
) -> Result<Tensor> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.model()?;
    let mut req = SampleRequest::new(count, cfg.train.seed);
    req.tau_mode = tau_mode;
    let samples = sample(&model, &req)?;
    create_dir(&cfg.out)?;
    TensorFile::new(samples.clone()).with_meta("seed", cfg.train.seed).save(&cfg.out.join("samples.aiqt"))?;
    write_images(&cfg.out, "sample", &samples, image_size(&ckpt))?;
    Ok(samples)
}

/// Completes row `row` of `source` given its values at `known`, which must
/// be exactly the first `known.len()` positions of the model's ordering.
/// Writes `inpaint.aiqt` and, for image checkpoints, `inpaint_NNN.pgm`.
pub fn cmd_inpaint(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    known: &[usize],
    source: &Path,
    row: usize,
    count: usize,
) -> Result<Tensor> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.model()?;
    let n = model.n();
    let ordering = &model.spec().ordering;
    let k = known.len();
    let mut sorted = known.to_vec();
    sorted.sort_unstable();
    let mut prefix_dims = ordering[..k.min(n)].to_vec();
    prefix_dims.sort_unstable();
    if k == 0 || k >= n || sorted != prefix_dims {
        return Err(Error::domain(format!(
            "known positions must be the first k (1 <= k < {n}) positions of the model's ordering; \
             for images this is the raster-scan prefix, i.e. whole top rows read left to right, e.g. 0-{}",
            n / 2 - 1
        )));
    }
    let file = load_data(source)?;
    if file.tensor.cols() != n {
        return Err(Error::config(format!("source has n = {}, checkpoint has n = {n}", file.tensor.cols())));
    }
    if row >= file.tensor.rows() {
        return Err(Error::config(format!("row {row} out of range ({} rows)", file.tensor.rows())));
    }
    let values = file.tensor.row(row);
    let prefix = ordering[..k].iter().map(|&d| values[d]).collect();
    let out = inpaint(&model, &InpaintRequest::new(prefix, count, cfg.train.seed))?;
    create_dir(&cfg.out)?;
    TensorFile::new(out.clone()).with_meta("seed", cfg.train.seed).save(&cfg.out.join("inpaint.aiqt"))?;
    write_images(&cfg.out, "inpaint", &out, image_size(&ckpt))?;
    Ok(out)
}

/// Runs the evaluation suite and writes `eval.csv`. Analytic marginals from
/// the config are included when its task matches the checkpoint.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, data: &Path, samples: Option<usize>) -> Result<MetricTable> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.model()?;
    let file = load_data(data)?;
    let n = model.n();
    if file.tensor.cols() != n {
        return Err(Error::config(format!("dataset has n = {}, checkpoint has n = {n}", file.tensor.cols())));
    }
    let mut opts = EvalOptions::new(cfg.train.seed);
    opts.samples = samples;
    if cfg.known_n() == Some(n) && ckpt.extra("task") == Some(cfg.task.as_str()) {
        opts.truth = cfg.truth_marginals()?;
    }
    let table = eval_suite(&model, &file.tensor, &opts)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join("eval.csv");
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    table.write_csv(std::io::BufWriter::new(f))?;
    Ok(table)
}

/// Builds the configured model from a fresh seed and checks its gradients on
/// one synthetic batch. With `inject_fault` the analytic gradient of
/// `out.bias[0]` is shifted by 1e-2 first.
pub fn cmd_gradcheck(cfg: &ExperimentConfig, inject_fault: bool) -> Result<GradCheckReport> {
    cfg.validate()?;
    let n = match cfg.known_n() {
        Some(n) => n,
        None => {
            let path = cfg.idx_path.as_ref().expect("validated");
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_idx(&bytes)?.0.cols()
        }
    };
    let root = Rng::new(cfg.train.seed).fork(300);
    let model = AiqnModel::new(cfg.model_spec(n), &mut root.fork(0))?;
    let loss = cfg.train.loss_config();
    let batch = synthetic_batch(&model, GRADCHECK_BATCH, loss, &mut root.fork(1))?;
    let opts = GradCheckOptions {
        seed: cfg.train.seed,
        fault: inject_fault.then(|| Fault { param: model.params().len() - 1, index: 0, delta: 1e-2 }),
        ..Default::default()
    };
    grad_check(&model, &batch, loss, &opts)
}
