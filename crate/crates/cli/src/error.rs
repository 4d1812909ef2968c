use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numeric check failed: {0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] hardsphere::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use hardsphere::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Core(e) => match e {
                E::Dimension(_)
                | E::DimensionMismatch { .. }
                | E::InvalidParam(_)
                | E::IndexOutOfRange { .. }
                | E::ZeroVelocity
                | E::ExcludedPoint => 2,
                E::Overlap(..)
                | E::NotAtContact(..)
                | E::InvalidCreation(_)
                | E::Precondition(_)
                | E::AllSamplesBad
                | E::TooDense { .. }
                | E::EmptyProbes => 3,
                E::NonFinite(_) | E::CollisionCap(_) | E::JsetCap(_) | E::Numeric(_) => 4,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
