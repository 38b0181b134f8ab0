//! Uncertainty/quality statistics: Pearson correlations and the pruned
//! multiple linear regression that estimates mean Dice from per-class
//! uncertainties.

mod correlation;
pub mod dist;
mod model;
mod ols;
mod report;

use thiserror::Error;

pub use correlation::{correlation_report, pearson, CorrelationReport, CorrelationSample};
pub use model::{fit_quality_model, QualityModel, QualityObservation, MODEL_FORMAT_VERSION};
pub use ols::{ols, OlsFit};
pub use report::{correlation_table, regression_table, significance_stars};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {required} observations, got {n}")]
    InsufficientData { n: usize, required: usize },
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
    #[error("design matrix is rank deficient at column {column}")]
    SingularDesign { column: usize },
    #[error("response has zero variance")]
    ConstantResponse,
    #[error("observation {index} has {actual} classes, expected {expected}")]
    ClassCountMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("significance level {0} is not in (0, 1)")]
    InvalidAlpha(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported model format version {0}")]
    ModelVersion(u32),
    #[error("malformed model document: {0}")]
    ModelFormat(String),
}
