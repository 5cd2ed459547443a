//! Error type shared by every module of the toolkit.

use thiserror::Error;

use crate::losses::BoundReport;

pub type Result<T> = std::result::Result<T, RefcalError>;

#[derive(Debug, Error)]
pub enum RefcalError {
    #[error("row {row} has (near-)zero norm and cannot be projected onto the sphere")]
    ZeroVector { row: usize },

    #[error("vector is not unit norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("anchor {anchor} has an empty positive set")]
    EmptyPositiveSet { anchor: usize },

    #[error("anchor {anchor} has an empty negative set")]
    EmptyNegativeSet { anchor: usize },

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("label smoothing epsilon must lie in [0, 1), got {0}")]
    EpsilonOutOfRange(f64),

    #[error("focal gamma must be non-negative, got {0}")]
    NegativeGamma(f64),

    #[error("supervised contrastive bound violated (margin {})", .0.margin)]
    BoundViolation(Box<BoundReport>),

    #[error("empty batch")]
    EmptyBatch,

    #[error("too few samples: need at least {needed}, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error("kernel bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("confidences do not contain both correct and incorrect predictions")]
    DegenerateSplit,

    #[error("score list is empty")]
    EmptyScores,

    #[error("row {row} is not a probability vector (sum = {sum})")]
    RowNotStochastic { row: usize, sum: f64 },

    #[error("confusion row for predicted class {class} has argmax {argmax}")]
    RowArgmaxMismatch { class: usize, argmax: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("validation split is empty")]
    EmptyValidation,

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("imbalance factor must lie in (0, 1], got {0}")]
    InvalidImbalance(f64),

    #[error("class map does not cover class {0}")]
    IncompleteMap(usize),

    #[error("group {0} receives no classes")]
    EmptyGroup(usize),

    #[error("corruption severity must be 1..=5, got {0}")]
    SeverityOutOfRange(u8),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("{stage} diverged at epoch {epoch}: loss is not finite")]
    Diverged { stage: &'static str, epoch: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
