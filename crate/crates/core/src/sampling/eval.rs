use std::io::Write;

use super::generate::{sample, SampleRequest};
use crate::divergence::{frechet_distance, moment_summary, quantile_divergence, wasserstein1_empirical, QuantileFn};
use crate::error::{Error, Result};
use crate::network::AiqnModel;
use crate::numerics::{AnalyticDist, Rng, Tensor};

/// Fewest data rows an evaluation accepts.
pub const MIN_EVAL_ROWS: usize = 100;

/// Random half splits averaged into each noise floor.
const FLOOR_SPLITS: usize = 8;

/// Default cap on the number of model samples.
const DEFAULT_SAMPLES: usize = 10_000;

/// Maps a batch of rows to feature rows before the Fréchet distance.
pub type FeatureMap<'a> = dyn Fn(&Tensor) -> Result<Tensor> + 'a;

#[derive(Clone, Default)]
pub struct EvalOptions<'a> {
    /// Model-sample count; defaults to `min(m, 10000)`.
    pub samples: Option<usize>,
    pub seed: u64,
    pub features: Option<&'a FeatureMap<'a>>,
    /// Analytic marginals; entry `i`, when present, adds `qdiv_dim{i}`.
    pub truth: Vec<Option<AnalyticDist>>,
    pub context: Option<Vec<f64>>,
}

impl<'a> EvalOptions<'a> {
    pub fn new(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    /// Number of model samples behind the value (data rows for noise floors).
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub records: Vec<MetricRecord>,
    pub seed: u64,
}

impl MetricTable {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.records.iter().find(|r| r.metric == metric).map(|r| r.value)
    }

    fn push(&mut self, metric: impl Into<String>, value: f64, samples: usize) {
        self.records.push(MetricRecord { metric: metric.into(), value, samples });
    }

    /// CSV with header `metric,value,samples,seed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::io("<metrics>", std::io::Error::other(e));
        out.write_record(["metric", "value", "samples", "seed"]).map_err(csv_err)?;
        for r in &self.records {
            out.write_record([r.metric.clone(), r.value.to_string(), r.samples.to_string(), self.seed.to_string()])
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::io("<metrics>", e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("UTF-8 CSV")
    }
}

fn features(opts: &EvalOptions<'_>, rows: &Tensor) -> Result<Tensor> {
    match opts.features {
        Some(f) => f(rows),
        None => Ok(rows.clone()),
    }
}

fn per_dim_w1(a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    (0..a.cols()).map(|i| wasserstein1_empirical(&a.column(i), &b.column(i))).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Compares given samples against data:
/// - `w1_dim{i}` and `w1_mean` on equal-size subsamples,
/// - `frechet` between all samples and all data rows,
/// - `*_floor` counterparts between two disjoint halves of the data, which
///   estimate the values two draws of the same law produce (averaged over
///   8 random splits).
pub fn eval_samples(samples: &Tensor, data: &Tensor, opts: &EvalOptions<'_>) -> Result<MetricTable> {
    let m = data.rows();
    if data.rank() != 2 || m < MIN_EVAL_ROWS {
        return Err(Error::domain(format!("evaluation needs at least {MIN_EVAL_ROWS} data rows, got {m}")));
    }
    if samples.rank() != 2 || samples.cols() != data.cols() {
        return Err(Error::domain(format!(
            "sample shape {:?} does not match data with {} columns",
            samples.shape(),
            data.cols()
        )));
    }
    let s = opts.samples.unwrap_or(usize::MAX).min(samples.rows()).min(m);
    if s < 2 {
        return Err(Error::domain(format!("need at least 2 model samples, got {s}")));
    }
    let root = Rng::new(opts.seed);
    let mut perm: Vec<usize> = (0..m).collect();
    root.fork(1).shuffle(&mut perm);
    let model_rows = samples.select_rows(&(0..s).collect::<Vec<_>>());
    let data_sub = data.select_rows(&perm[..s]);

    let mut table = MetricTable { records: Vec::new(), seed: opts.seed };
    let w1 = per_dim_w1(&model_rows, &data_sub)?;
    for (i, v) in w1.iter().enumerate() {
        table.push(format!("w1_dim{i}"), *v, s);
    }
    table.push("w1_mean", mean(&w1), s);
    let fd =
        frechet_distance(&moment_summary(&features(opts, &model_rows)?)?, &moment_summary(&features(opts, data)?)?)?;
    table.push("frechet", fd, s);

    let half = m / 2;
    let mut floor = vec![0.0; data.cols()];
    let mut ff = 0.0;
    for j in 0..FLOOR_SPLITS {
        let mut p: Vec<usize> = (0..m).collect();
        root.fork(2 + j as u64).shuffle(&mut p);
        let (h1, h2) = (data.select_rows(&p[..half]), data.select_rows(&p[half..2 * half]));
        for (acc, v) in floor.iter_mut().zip(per_dim_w1(&h1, &h2)?) {
            *acc += v / FLOOR_SPLITS as f64;
        }
        let d = frechet_distance(&moment_summary(&features(opts, &h1)?)?, &moment_summary(&features(opts, &h2)?)?)?;
        ff += d / FLOOR_SPLITS as f64;
    }
    for (i, v) in floor.iter().enumerate() {
        table.push(format!("w1_floor_dim{i}"), *v, half);
    }
    table.push("w1_floor_mean", mean(&floor), half);
    table.push("frechet_floor", ff, half);
    Ok(table)
}

/// Samples `min(m, 10000)` rows (or `opts.samples`) from the model and runs
/// [`eval_samples`]. For each analytic marginal in `opts.truth` it adds the
/// quantile divergence: the model's own quantile map for the dimension
/// generated first, the empirical quantiles of the samples otherwise.
pub fn eval_suite(model: &AiqnModel, data: &Tensor, opts: &EvalOptions<'_>) -> Result<MetricTable> {
    let n = model.n();
    if data.rank() != 2 || data.cols() != n {
        return Err(Error::domain(format!("data shape {:?} does not match a model with n = {n}", data.shape())));
    }
    if data.rows() < MIN_EVAL_ROWS {
        return Err(Error::domain(format!("evaluation needs at least {MIN_EVAL_ROWS} data rows, got {}", data.rows())));
    }
    if opts.truth.len() > n {
        return Err(Error::domain(format!("{} analytic marginals for n = {n}", opts.truth.len())));
    }
    let s = opts.samples.unwrap_or(data.rows().min(DEFAULT_SAMPLES));
    let mut req = SampleRequest::new(s, opts.seed);
    req.context = opts.context.clone();
    let samples = sample(model, &req)?;
    let mut table = eval_samples(&samples, data, opts)?;

    let first = model.spec().ordering[0];
    for (i, truth) in opts.truth.iter().enumerate() {
        let Some(p) = truth else { continue };
        let q = if i == first {
            let ctx = opts.context.clone();
            let ctx_t = ctx.as_ref().map(|c| Tensor::new(vec![1, c.len()], c.clone())).transpose()?;
            let x = Tensor::zeros(vec![1, n]);
            QuantileFn::new(
                move |t| {
                    let tau = Tensor::filled(vec![1, n], t);
                    model.forward_dim(&x, &tau, ctx_t.as_ref(), i).map_or(f64::NAN, |v| v[0])
                },
                false,
            )?
        } else {
            QuantileFn::empirical(&samples.column(i))?
        };
        table.push(format!("qdiv_dim{i}"), quantile_divergence(p, &q, 1e-7)?, s);
    }
    Ok(table)
}
