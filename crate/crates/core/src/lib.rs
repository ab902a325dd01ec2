//! Autoregressive implicit quantile networks.
//!
//! A network is fed a partial sample together with quantile levels
//! `tau` in `[0, 1]` and returns the conditional quantiles of each dimension.
//! Sampling draws fresh `tau` values and fills dimensions one at a time in the
//! model's ordering. Training is plain quantile regression, which minimizes the
//! quantile divergence between the data and the model.
//!
//! Modules:
//! - [`numerics`]: tensors, seeded random streams, analytic distributions,
//!   quadrature and symmetric eigendecomposition.
//! - [`losses`]: pinball and Huber quantile losses.
//! - [`divergence`]: quantile divergence, empirical 1-Wasserstein and
//!   Fréchet distance.
//! - [`network`]: the masked, gated, `tau`-conditioned network.
//! - [`training`]: optimizers, Polyak averaging, the training loop, gradient
//!   checking and checkpoints.
//! - [`sampling`]: generation, inpainting, quantile-density queries and the
//!   evaluation suite.
//! - [`cli`]: datasets, file formats and the `aiqn` command-line front end.

// `!(a <= b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod cli;
pub mod divergence;
pub mod error;
pub mod losses;
pub mod network;
pub mod numerics;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
