use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("vertex or item not found: {0}")]
    NotFound(String),
    #[error("absorbing set is empty")]
    NoAbsorbingSet,
    #[error("target set is empty")]
    NoTarget,
    #[error("zero set is empty")]
    NoZeroSet,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("incompatible measures: {0}")]
    IncompatibleMeasures(String),
    #[error("invalid regions: {0}")]
    InvalidRegions(String),
    #[error("zero sets are not nested: {0}")]
    InvalidNesting(String),
    #[error("empty sample")]
    EmptySample,
    #[error("invalid correlation: {0}")]
    InvalidCorrelation(String),
    #[error("insufficient design: {0}")]
    InsufficientDesign(String),
    #[error("walk trajectory was not recorded")]
    TrajectoryNotRecorded,
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }
}
