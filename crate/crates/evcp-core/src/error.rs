//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in input header")]
    MissingColumn(String),

    #[error("non-numeric or non-finite cell at data row {row}, column `{column}`")]
    NonNumericCell { row: usize, column: String },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("split would leave the {partition} partition empty")]
    PartitionTooSmall { partition: &'static str },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    #[error("model has not been calibrated")]
    NotCalibrated,

    #[error("input contains non-finite values")]
    NonFiniteInput,

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid range for feature {feature}: lower bound must be below upper bound")]
    InvalidRange { feature: usize },

    #[error("feature {feature} is constant; its standard deviation is zero")]
    ZeroStd { feature: usize },

    #[error("class {0} has no rows in the training targets")]
    MissingClass(usize),

    #[error("weighted prediction denominator is zero")]
    ZeroDenominator,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("config fingerprint mismatch: artifact was produced under {got}, expected {expected}")]
    FingerprintMismatch { expected: String, got: String },

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 3 for data errors, 4 for
    /// model/schema errors (usage errors exit 2 before reaching here).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingColumn(_)
            | Error::NonNumericCell { .. }
            | Error::EmptyDataset
            | Error::PartitionTooSmall { .. }
            | Error::NonFiniteInput
            | Error::LengthMismatch { .. }
            | Error::InvalidParam(_)
            | Error::InvalidRange { .. }
            | Error::ZeroStd { .. }
            | Error::Io(_)
            | Error::Csv(_) => 3,
            Error::EmptyTrainingSet
            | Error::EmptyCalibrationSet
            | Error::NotCalibrated
            | Error::DimensionMismatch { .. }
            | Error::MissingClass(_)
            | Error::ZeroDenominator
            | Error::SchemaMismatch(_)
            | Error::FingerprintMismatch { .. }
            | Error::Json(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
