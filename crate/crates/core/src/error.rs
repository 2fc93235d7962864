use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("header/column mismatch: {0}")]
    Header(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("dataset needs at least {required} rows, found {found}")]
    TooFewRows { required: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient samples for block size: need {required}, have {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("degenerate innovation at row {row}: variance {variance}")]
    DegenerateInnovation { row: usize, variance: f64 },

    #[error("filter failed at sample {sample}: {source}")]
    Filter {
        sample: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 1 usage/config, 2 data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => 1,
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Header(_)
            | Error::NonFinite { .. }
            | Error::TooFewRows { .. }
            | Error::Dimension(_)
            | Error::InsufficientSamples { .. } => 2,
            Error::Degenerate(_)
            | Error::Singular(_)
            | Error::DegenerateInnovation { .. } => 3,
            Error::Filter { source, .. } => source.exit_code(),
        }
    }
}
