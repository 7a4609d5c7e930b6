use thiserror::Error;

/// Errors raised by the geometry, controller and environment layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    InvalidMatrix,

    #[error("singular value decomposition did not converge")]
    NoConvergence,

    #[error("kernel is empty: the Jacobian has full column rank {rank}")]
    EmptyKernel { rank: usize },

    #[error("reference frame has {frame} columns but the kernel has dimension {kernel}")]
    FrameMismatch { kernel: usize, frame: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("slack value {0} is outside the domain of the slack function")]
    SlackDomain(f64),

    /// More constraints are active than there are controls to resolve them.
    #[error(
        "augmented Jacobian has rank {rank} < {expected} rows \
         (constant-rank assumption violated: too many active constraints)"
    )]
    RankDeficient { rank: usize, expected: usize },

    #[error("incomplete problem data: {0}")]
    MissingInput(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("environment fault: {0}")]
    EnvFault(String),
}

pub type Result<T> = std::result::Result<T, Error>;
