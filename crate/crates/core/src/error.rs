use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid piecewise-linear function: {0}")]
    InvalidFunction(String),
    #[error("slope {0} is outside [-1, 1]")]
    SlopeOutOfRange(f64),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("network parameters changed without a refresh")]
    StaleCache,
    #[error("tape was recorded for network version {tape}, network is at version {network}")]
    StaleTape { tape: u64, network: u64 },
    #[error("compiler precondition violated: {0}")]
    Precondition(String),
    #[error("compiler invariant violated: {0}")]
    Internal(String),
    #[error("comparison function returned a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
