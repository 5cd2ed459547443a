//! Training and verification losses.
//!
//! The refinement loss is a diagnostic quantity (value only). The supervised
//! contrastive loss is its differentiable surrogate; `verify_bound` evaluates
//! both together with every intermediate lower bound between them. The
//! calibration losses operate on logits and are used for classifier training.

mod bound;
mod calibration;
mod refinement;
mod supcon;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use bound::{verify_bound, verify_bound_with, BoundReport, ChainStep, BOUND_SLACK};
pub use calibration::{focal_loss, label_smoothing_loss, log_softmax_rows, nll_loss, smoothed_targets, softmax_rows};
pub use refinement::{refinement_loss, refinement_loss_with};
pub use supcon::{supcon_loss, supcon_loss_with};

use crate::error::{RefcalError, Result};

/// A loss value and, when requested, its gradient with respect to the
/// differentiated argument (embeddings or logits).
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Option<Array2<f64>>,
}

impl LossValue {
    pub fn value_only(value: f64) -> Self {
        Self { value, gradient: None }
    }
}

/// Stage-2 classifier loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationLossSpec {
    #[default]
    Nll,
    LabelSmoothing { epsilon: f64 },
    Focal { gamma: f64 },
}

impl CalibrationLossSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CalibrationLossSpec::Nll => Ok(()),
            CalibrationLossSpec::LabelSmoothing { epsilon } => {
                if (0.0..1.0).contains(&epsilon) {
                    Ok(())
                } else {
                    Err(RefcalError::EpsilonOutOfRange(epsilon))
                }
            }
            CalibrationLossSpec::Focal { gamma } => {
                if gamma >= 0.0 {
                    Ok(())
                } else {
                    Err(RefcalError::NegativeGamma(gamma))
                }
            }
        }
    }

    pub fn evaluate(&self, logits: &Array2<f64>, labels: &[usize], want_gradient: bool) -> Result<LossValue> {
        match *self {
            CalibrationLossSpec::Nll => nll_loss(logits, labels, want_gradient),
            CalibrationLossSpec::LabelSmoothing { epsilon } => {
                label_smoothing_loss(logits, labels, epsilon, want_gradient)
            }
            CalibrationLossSpec::Focal { gamma } => focal_loss(logits, labels, gamma, want_gradient),
        }
    }

    /// Short name used in logs and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            CalibrationLossSpec::Nll => "nll",
            CalibrationLossSpec::LabelSmoothing { .. } => "ls",
            CalibrationLossSpec::Focal { .. } => "focal",
        }
    }
}
