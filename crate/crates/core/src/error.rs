//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Repeated reservoir draws produced a (near-)nilpotent adjacency matrix.
    #[error("degenerate reservoir draw")]
    DegenerateReservoirDraw,

    /// An input vector or control parameter contained NaN/inf.
    #[error("non-finite drive")]
    NonFiniteDrive,

    /// A caller violated an operation precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Ridge solve with lambda = 0 hit a singular normal matrix.
    #[error("regularization required: {0}")]
    RegularizationRequired(String),

    /// Closed-loop output left the trusted range; the run was truncated.
    #[error("diverged at step {0}")]
    Diverged(usize),

    /// Time-series Lyapunov estimation found too few neighbor pairs.
    #[error("insufficient recurrence")]
    InsufficientRecurrence,

    /// Angle decode received a (0, 0) sine/cosine pair.
    #[error("undetermined angle")]
    UndeterminedAngle,

    #[error("config error: {0}")]
    Config(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to.
    /// 1 = usage/config error, 2 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Io(_) | Error::ModelFormat(_) => 1,
            Error::DegenerateReservoirDraw
            | Error::NonFiniteDrive
            | Error::RegularizationRequired(_)
            | Error::Diverged(_)
            | Error::InsufficientRecurrence
            | Error::UndeterminedAngle => 2,
        }
    }
}
