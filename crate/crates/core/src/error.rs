use thiserror::Error;

/// Errors raised across the crate.
///
/// Divergence of a training run or a TD iteration is *not* an error: it is
/// recorded as data (`diverged` flags). These variants cover misuse and
/// numerical faults that make a single operation meaningless.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent shapes or an invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite activations appeared in a forward pass.
    #[error("numeric overflow in layer {layer}")]
    NumericOverflow { layer: usize },

    /// Non-finite values where finite ones are required (gradients, losses).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
