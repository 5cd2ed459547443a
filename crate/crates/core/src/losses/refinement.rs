use crate::embeddings::{half_sq_distance, EmbeddingBatch};
use crate::error::Result;
use crate::exec::{map_indexed, ordered_sum, ExecMode};

use super::LossValue;

/// Sum over anchors of the nearest-positive half squared distance minus the
/// nearest-negative half squared distance.
///
/// Value only: the minima make this non-smooth, and training goes through the
/// contrastive surrogate instead.
pub fn refinement_loss(batch: &EmbeddingBatch) -> Result<LossValue> {
    refinement_loss_with(batch, ExecMode::default())
}

pub fn refinement_loss_with(batch: &EmbeddingBatch, mode: ExecMode) -> Result<LossValue> {
    batch.require_pairs(true)?;
    let labels = batch.labels();
    let terms = map_indexed(batch.len(), mode, |i| {
        let zi = batch.row(i);
        let mut nearest_pos = f64::INFINITY;
        let mut nearest_neg = f64::INFINITY;
        for j in 0..labels.len() {
            if j == i {
                continue;
            }
            let d = half_sq_distance(zi, batch.row(j));
            if labels[j] == labels[i] {
                nearest_pos = nearest_pos.min(d);
            } else {
                nearest_neg = nearest_neg.min(d);
            }
        }
        nearest_pos - nearest_neg
    });
    Ok(LossValue::value_only(ordered_sum(&terms)))
}
