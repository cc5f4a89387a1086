use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    Singular { pivot: usize, value: f64 },

    #[error("singular covariance: coefficient {coefficient} has no residual variation after projection")]
    SingularCovariance { coefficient: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{0}")]
    Data(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("experiment aborted: {failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    /// Short, stable category string used as the CLI's machine-readable error tag.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Singular { .. } | Error::SingularCovariance { .. } => "singular",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::NonFinite(_) => "non-finite",
            Error::Degenerate(_) => "degenerate",
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Data(_) | Error::Csv(_) => "data",
            Error::Json(_) => "json",
            Error::TooManyFailures { .. } => "experiment",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "invalid-argument" => 2,
            "io" => 3,
            "data" | "json" => 4,
            "dimension" => 5,
            "singular" | "degenerate" => 6,
            "non-finite" => 7,
            _ => 1,
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
