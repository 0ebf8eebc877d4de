use thiserror::Error;

use crate::case::BusId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed case (line {line}): {message}")]
    MalformedCase { line: usize, message: String },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("load factors must be nonempty and strictly increasing")]
    UnsortedFactors,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular assembly: {0}")]
    SingularAssembly(String),

    #[error("voltage collapse point at bus {bus} (|V| = {magnitude:e})")]
    VoltageCollapsePoint { bus: BusId, magnitude: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linear system is singular at maximum damping")]
    SingularSystem,

    #[error("all compensation slacks are below the support threshold")]
    AllZeroSlack,

    #[error("no feasible support with at most {max_card} locations")]
    CardinalityExceeded { max_card: usize },

    #[error("report schema {found} does not match supported version {expected}")]
    SchemaMismatch { found: String, expected: String },

    #[error("report does not contain mode `{0}`")]
    MissingMode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn malformed(line: usize, message: impl Into<String>) -> Self {
        Error::MalformedCase {
            line,
            message: message.into(),
        }
    }
}
