use std::path::PathBuf;

use thiserror::Error;

use crate::modelio::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hash length mismatch: {left} bits vs {right} bits")]
    HashLengthMismatch { left: usize, right: usize },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("cost table has no entry for {rows} rows x {word_bits} bits")]
    MissingCostEntry { rows: usize, word_bits: usize },

    #[error("report mismatch: {0}")]
    ReportMismatch(String),

    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("empty calibration set")]
    EmptyCalibration,
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, value: impl ToString) -> Self {
        Error::OutOfRange { what, value: value.to_string() }
    }

    /// True for failures caused by reading or writing files, as opposed to
    /// invalid inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
