use thiserror::Error;

/// Errors raised across the granulation/degranulation pipeline.
///
/// The variants are grouped so callers can map them onto coarse exit
/// classes: data problems (anything wrong with an input file or matrix),
/// parameter problems (a caller asked for something inconsistent), and
/// numeric failures (the math degenerated at runtime).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {col}: {detail}")]
    Parse {
        row: usize,
        col: usize,
        detail: String,
    },

    #[error("feature {index} ({name}) is constant; cannot z-score")]
    DegenerateFeature { index: usize, name: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("cluster {cluster} received zero total membership mass")]
    DeadCluster { cluster: usize },

    #[error("datum {row} received zero total membership mass")]
    IsolatedDatum { row: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("malformed model or results file: {0}")]
    Format(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used by front ends to pick an exit code.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. }
            | Error::EmptyInput(_)
            | Error::RaggedRow { .. }
            | Error::Parse { .. }
            | Error::DegenerateFeature { .. }
            | Error::DegenerateData(_)
            | Error::Format(_) => ErrorClass::Data,
            Error::InvalidParam(_) | Error::DimMismatch(_) => ErrorClass::Usage,
            Error::DeadCluster { .. } | Error::IsolatedDatum { .. } | Error::Numeric(_) => {
                ErrorClass::Numeric
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

pub type Result<T> = std::result::Result<T, Error>;
