use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the function it was passed to.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// The leakage threshold admits too few users to reach the target access probability.
    #[error("infeasible threshold: F_I(phi_i) * N = {product} must exceed 1")]
    InfeasibleThreshold { product: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("no feasible point in the search grid")]
    NoFeasiblePoint,

    #[error("config line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("missing required config keys: {}", keys.join(", "))]
    MissingKeys { keys: Vec<String> },

    #[error("invalid value for `{field}`: {detail}")]
    Range { field: String, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        op,
        detail: detail.into(),
    }
}
