use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bin index {index} out of range for a grid with {bins} bins")]
    IndexOutOfRange { index: usize, bins: usize },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),

    #[error("zero evidence for observed bin {bin} although it is reachable from the prior")]
    ZeroEvidence { bin: usize },

    #[error("log of zero at step {step}: reverse kernel assigns no mass to x_(t-1)={from} given x_t={to} where the forward process has positive weight")]
    LogOfZero { step: usize, from: usize, to: usize },

    #[error("grid has {bins} bins, above the dense-product guard of {limit}")]
    GuardExceeded { bins: usize, limit: usize },

    #[error("no states left after discarding a burn-in of {burn_in} from a trace of length {len}")]
    EmptySegment { burn_in: usize, len: usize },

    #[error(
        "likelihood is not ergodic on the prior's support: {unreachable} supported bins unreachable from bin {from}"
    )]
    NotErgodic { from: usize, unreachable: usize },

    #[error("malformed csv at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
