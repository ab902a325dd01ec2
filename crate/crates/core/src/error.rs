use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numeric, modelling and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive quadrature hit its recursion cap before meeting the tolerance.
    #[error("integration did not converge (best estimate {estimate}, error estimate {error_estimate})")]
    Integration { estimate: f64, error_estimate: f64 },

    /// Training produced a non-finite loss or gradient.
    #[error("training aborted at step {step}: {reason}")]
    Training { step: usize, reason: String },

    /// An experiment configuration was malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A file did not match its expected binary layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format { offset, message: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
