//! Feature ranking: Spearman rank correlation and split-based importance.

mod correlation;
mod importance;

use thiserror::Error;

pub use self::correlation::{correlation_matrix, rank, spearman, CorrelationMatrix};
pub use self::importance::{
    forest_importance, model_importance, select_nonzero, tree_importance, ImportanceMode,
    ImportanceReport, Selection,
};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("input vector is empty")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least two observations, got {0}")]
    TooFewObservations(usize),
    #[error("constant input: rank standard deviation is zero")]
    ConstantInput,
    #[error("correlation matrix needs at least one feature column")]
    NoFeatures,
    #[error("model has no trees")]
    UntrainedModel,
    #[error("no feature has a nonzero {0} score")]
    AllZero(ImportanceMode),
    #[error("unknown importance mode {0:?}")]
    UnknownMode(String),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shortest round-trip text for a float; `None` becomes an empty cell.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
