use thiserror::Error;

/// Errors surfaced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of its legal range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Tensor/vector dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A backward pass was handed a trace that does not belong to the
    /// forward pass it claims to come from.
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),

    /// A gradient or loss became non-finite; the payload names the offender.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Training diverged (NaN loss) at the given epoch.
    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    /// File container problems (bad magic, unsupported layout, truncation).
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
