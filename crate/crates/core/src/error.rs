//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HiqError {
    /// Configuration violates an invariant (bad sparsity, overflow, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data violates a precondition (shape mismatch, uneven classes, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// The flow network could not ship its full supply. This signals a
    /// construction bug; it cannot occur for well-formed inputs.
    #[error("infeasible flow network: {0}")]
    Infeasible(String),

    /// A flow failed conservation or capacity checks.
    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    /// Problem instance exceeds the enumeration guard of the brute-force oracle.
    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    /// Training produced a non-finite loss.
    #[error(
        "training diverged at iteration {iteration}: loss={loss}, grad_norm={grad_norm}, lr={learning_rate}"
    )]
    Diverged {
        iteration: usize,
        loss: f64,
        grad_norm: f64,
        learning_rate: f64,
    },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HiqError>;
