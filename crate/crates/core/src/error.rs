use thiserror::Error;

/// Errors raised while loading data or fitting models.
#[derive(Debug, Error)]
pub enum CoxError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {msg}")]
    InvalidRow { row: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no events present in the data")]
    NoEvents,

    #[error("no comparable pairs for concordance")]
    NoComparablePairs,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("every cross-validation fold failed")]
    AllFoldsFailed,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoxError {
    /// True for errors caused by bad input (as opposed to numerical or I/O trouble).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CoxError::MissingColumn(_)
                | CoxError::InvalidRow { .. }
                | CoxError::InvalidData(_)
                | CoxError::InvalidParameter(_)
                | CoxError::DimensionMismatch { .. }
                | CoxError::NoEvents
                | CoxError::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CoxError>;
