//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (edge lists, manifests, checkpoints).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A point failed the hyperboloid constraint check.
    #[error("row {row} is off the manifold: |<x,x>_L + 1/c| = {violation:.3e}")]
    OffManifold { row: usize, violation: f64 },

    /// A computation produced NaN or infinity.
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    /// Training loss stopped being finite.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    /// A node label was not present in the graph.
    #[error("unknown node label: {0:?}")]
    UnknownLabel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of numerical origin (divergence, non-finite values),
    /// as opposed to bad input. The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. })
    }
}
