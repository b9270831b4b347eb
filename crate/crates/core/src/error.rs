use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate vector at index {index} (norm {norm:e})")]
    DegenerateVector { index: usize, norm: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("finite-difference audit: non-finite loss while perturbing {parameter}")]
    Audit { parameter: String },

    #[error(
        "training diverged at epoch {epoch}, batch {batch}: {what} \
         (similarity range [{min_similarity:.4e}, {max_similarity:.4e}])"
    )]
    Divergence {
        epoch: usize,
        batch: usize,
        what: String,
        min_similarity: f64,
        max_similarity: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Checks `actual == expected`, producing a [`Error::Dimension`] otherwise.
pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
