//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by ingestion, fitting, cohort construction, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: missing column `{column}`")]
    MissingColumn { file: String, column: String },

    /// Row numbers are 1-based and count the header as row 1.
    #[error("{file}: row {row}, column `{column}`: {reason}")]
    BadValue {
        file: String,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{file}: row {row}: duplicate id `{id}`")]
    DuplicateId { file: String, row: usize, id: String },

    #[error("energy and weather series share no dates")]
    NoOverlap,

    #[error("building `{id}` has non-positive floor area")]
    ZeroArea { id: String },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("annual `{component}` energy is positive but its degree-day sum is zero")]
    ZeroDegreeDays { component: String },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("building `{id}` has no location")]
    MissingLocation { id: String },

    #[error("insufficient cohort: found {found} matching homes, need {need}")]
    InsufficientCohort { found: usize, need: usize },

    #[error("no posterior ECDFs for building `{id}`")]
    MissingEcdf { id: String },

    #[error("no posterior samples found for building `{id}`")]
    MissingPosterior { id: String },

    #[error("peer group is empty")]
    EmptyGroup,

    #[error("id mismatch between reports and ground truth: {0}")]
    IdMismatch(String),

    #[error("bad spec: {0}")]
    BadSpec(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
