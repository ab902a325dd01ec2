//! Generation from a trained network, inpainting with a fixed prefix,
//! quantile-density queries and the evaluation suite.
//!
//! Sample `i` of a request always draws its levels from `Rng::new(seed).fork(i)`,
//! so a sample does not depend on how many others were requested with it.

mod density;
mod eval;
mod generate;
mod stats;

pub use density::{quantile_density_report, DensityRow, DENSITY_FD_STEP, DENSITY_FLOOR};
pub use eval::{eval_samples, eval_suite, EvalOptions, FeatureMap, MetricRecord, MetricTable, MIN_EVAL_ROWS};
pub use generate::{inpaint, sample, InpaintRequest, SampleRequest};
pub use stats::{nearest_mode, pearson, spearman};

#[cfg(test)]
mod tests;
