use std::path::PathBuf;

use thiserror::Error;

use crate::spectral::SpectralDecomp;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid reshape plan: {0}")]
    Plan(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Subspace iteration ran out of iterations. The best iterate is kept so
    /// callers can decide whether it is good enough.
    #[error("subspace iteration did not converge after {iters} iterations (max residual {residual:.3e})")]
    Convergence {
        iters: usize,
        residual: f64,
        best: Box<SpectralDecomp>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
