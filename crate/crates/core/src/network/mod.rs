//! Autoregressive implicit quantile network.

pub mod masks;
mod model;
pub mod params;

pub use masks::{build_masks, ranks_of, Masks};
pub use model::{default_hidden, AiqnModel, ModelSpec, TauMode};
pub use params::ParamSet;
