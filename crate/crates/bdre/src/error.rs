use thiserror::Error;

/// Failure classes. The CLI maps them onto distinct exit codes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BdreError {
    /// Inputs outside an operation's preconditions.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested evaluation is numerically unstable and was refused.
    #[error("stability error: {0}")]
    Stability(String),
    /// A computation finished but missed its accuracy budget.
    #[error("accuracy error: {0}")]
    Accuracy(String),
}

pub type Result<T> = std::result::Result<T, BdreError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(BdreError::Domain(msg.into()))
}
