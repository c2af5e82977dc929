use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// `column` is 1-based.
    #[error("column {column} has norm {norm}, expected 1")]
    ColumnNorm { column: usize, norm: f64 },

    /// `iteration` is 1-based.
    #[error("selected columns are numerically singular at iteration {iteration} (condition estimate {condition:e})")]
    SingularSelection { iteration: usize, condition: f64 },

    #[error("selected columns are rank deficient (Gram condition estimate {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("{0} is not a prime >= 5")]
    NotPrime(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
