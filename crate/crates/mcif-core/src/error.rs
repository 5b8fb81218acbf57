//! Error type shared by the core algorithms.

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("dataset is empty")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class `{class}` has {count} objects; at least {min} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        min: usize,
    },

    #[error("split fractions sum to {sum}, expected 1")]
    BadFractions { sum: f64 },

    #[error("isolation forest requires at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },

    #[error("data matrix has zero feature dimensions")]
    ZeroDimensions,

    #[error("sample weight at index {index} is not positive and finite")]
    BadWeight { index: usize },

    #[error("subsample size must be at least 2, got {got}")]
    BadSubsampleSize { got: usize },

    #[error("non-finite value in tensor `{tensor}`")]
    NonFiniteParameter { tensor: String },

    #[error("training diverged at epoch {epoch}, batch {batch}; last finite loss {last_loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        last_loss: f64,
    },

    #[error("training set contains object `{object_id}` from anomalous class `{class}`")]
    AnomalousInTraining { object_id: String, class: String },

    #[error("anomaly pool for class `{class}` has {have} objects, {need} requested")]
    AnomalyPoolTooSmall {
        class: String,
        need: usize,
        have: usize,
    },

    #[error("category `{category}` has {count} classes; at least 2 required")]
    CategoryTooSmall { category: String, count: usize },

    #[error("score list `{which}` is empty")]
    EmptyScores { which: &'static str },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, CoreError>;
