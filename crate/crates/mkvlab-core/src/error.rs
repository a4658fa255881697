//! Error type shared by the whole crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Construction-time validation failure (bad grid, bad counts, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation was called outside its contract (off-grid time,
    /// mismatched atom counts, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Two objects that must live in the same space do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A user-supplied coefficient or test function returned a non-finite
    /// value.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// A simulated state left the sanity box; under the bounded zoo
    /// coefficients this signals a bug in a user-supplied model.
    #[error("simulation blow-up at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    /// The requested check needs structure the model does not declare
    /// (e.g. control-dependent common-noise diffusion).
    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
    pub fn evaluation(msg: impl Into<String>) -> Self {
        Error::Evaluation(msg.into())
    }
    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
