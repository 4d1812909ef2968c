use thiserror::Error;

/// Errors raised by the laboratory kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}; expected 2 or 3")]
    Dimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("zero velocity has no direction")]
    ZeroVelocity,

    #[error("direction maps onto the excluded antipodal point")]
    ExcludedPoint,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("index {index} out of range for {len} particles")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("particles {0} and {1} overlap")]
    Overlap(usize, usize),

    #[error("particles {0} and {1} are not at contact")]
    NotAtContact(usize, usize),

    #[error("collision cap of {0} events exceeded")]
    CollisionCap(usize),

    #[error("jset emitted more than {0} points")]
    JsetCap(usize),

    #[error("invalid creation: {0}")]
    InvalidCreation(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("every extension sample fell inside the bad set")]
    AllSamplesBad,

    #[error("acceptance rate {rate:.2e} below threshold after {attempts} attempts")]
    TooDense { rate: f64, attempts: usize },

    #[error("no probe survived good-set filtering")]
    EmptyProbes,

    #[error("numeric assertion failed: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
