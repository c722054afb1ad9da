//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulation and analysis layers.
///
/// Numerical failures carry the step or map index at which they occurred so
/// that callers (and the CLI exit paths) can report where a run left the
/// regime the model is defined in.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside an operation's mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Evaluation hit (or came within tolerance of) a branch point or other
    /// singular point of a slit map. `index` identifies the offending map
    /// within a composition (0 for a standalone evaluation).
    #[error("singular evaluation at map index {index}: {what}")]
    Singular { index: usize, what: String },

    /// A growth step produced a non-finite or out-of-range value.
    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: usize, what: String },

    /// Self-convergence of a quadrature did not reach the required relative
    /// tolerance; `achieved` is the best available estimate.
    #[error(
        "quadrature did not converge: best estimate {achieved}, \
         last relative change {rel_change} (required < {required})"
    )]
    QuadratureNonConvergence {
        achieved: f64,
        rel_change: f64,
        required: f64,
    },

    /// Invalid configuration or parameters for an experiment or operation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Run-record or report I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A persisted file could not be parsed.
    #[error("format error: {0}")]
    Format(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
