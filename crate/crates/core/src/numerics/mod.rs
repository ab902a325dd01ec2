//! Deterministic numeric substrate shared by every other module.

pub mod dist;
pub mod linalg;
pub mod quad;
pub mod rng;
pub mod tensor;

pub use dist::{std_normal_cdf, std_normal_quantile, AnalyticDist};
pub use linalg::{psd_sqrt, sym_eig, SymEig};
pub use quad::integrate;
pub use rng::Rng;
pub use tensor::Tensor;
