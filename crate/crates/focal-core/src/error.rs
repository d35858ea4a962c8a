use thiserror::Error;

/// Crate-wide error type. Shape errors carry the operation name and the
/// offending extents so a failed graph build pinpoints its own call site.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch ({details})")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("{op}: {msg}")]
    InvalidInput { op: &'static str, msg: String },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("{what}: {msg}")]
    Format { what: String, msg: String },

    #[error("training diverged at step {step} (last finite loss {last_loss})")]
    Diverged { step: usize, last_loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            details: details.into(),
        }
    }

    pub fn input(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidInput {
            op,
            msg: msg.into(),
        }
    }

    pub fn non_finite(what: impl Into<String>) -> Self {
        Error::NonFinite { what: what.into() }
    }

    pub fn format(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            msg: msg.into(),
        }
    }
}
