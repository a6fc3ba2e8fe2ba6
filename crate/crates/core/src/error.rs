use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// One offending cell or row found while validating tabular input.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based data row (the header is row 0); `None` for whole-table issues.
    pub row: Option<usize>,
    pub column: Option<String>,
    pub message: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match (&self.row, &self.column) {
            (Some(r), Some(c)) => write!(f, "row {r}, column '{c}': {}", self.message),
            (Some(r), None) => write!(f, "row {r}: {}", self.message),
            (None, Some(c)) => write!(f, "column '{c}': {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid dataset ({} problem(s)); first: {}", .0.len(), .0.first().map(|v| alloc::format!("{v}")).unwrap_or_default())]
    InvalidDataset(Vec<Violation>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("curve undefined: labels must contain both classes")]
    CurveUndefined,
    #[error("grid oracle refused: {0}")]
    OracleRefused(String),
}

pub type Result<T> = core::result::Result<T, Error>;
