//! Classifier reliability toolkit.
//!
//! Provides the nearest-neighbour refinement loss and its supervised
//! contrastive upper bound, a small differentiable network for two-stage
//! (contrastive pretraining, then frozen-encoder calibration) training,
//! seeded synthetic long-tailed datasets, and calibration, refinement and
//! out-of-distribution metrics.

// `!(x > y)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod embeddings;
pub mod error;
pub mod exec;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod verify;

pub use error::{RefcalError, Result};
