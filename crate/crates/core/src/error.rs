use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("prefix length {requested} exceeds sequence length {len}")]
    OutOfRange { requested: usize, len: usize },

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("matrix is not positive semi-definite after jitter in {0}")]
    NotPsd(&'static str),

    #[error("penalty is undefined: {0}")]
    UndefinedPenalty(String),

    #[error("estimator did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("enumeration of {required:.3e} nodes exceeds the bound {bound:.0e}{hint}")]
    EnumerationBound {
        required: f64,
        bound: f64,
        hint: &'static str,
    },

    #[error("operation requires a finite environment")]
    NotFinite,

    #[error("unknown catalog environment `{0}`")]
    UnknownEnvironment(String),

    #[error("condition does not hold; no constant can be derived")]
    ConditionFails,

    #[error("run {run_id} failed at step {step}: {source}")]
    Run {
        run_id: String,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
