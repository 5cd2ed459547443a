use super::ProbabilityBatch;
use crate::error::{RefcalError, Result};

/// Probability that a random positive scores above a random negative, ties
/// counted as one half. Computed from a single sort; exact for integer pair
/// counts below 2^53.
pub fn rank_auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(RefcalError::EmptyScores);
    }
    let mut scored: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    // twice the number of ordered pairs, so half-ties stay integral
    let mut doubled: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    let pairs = 2 * positives.len() as u128 * negatives.len() as u128;
    Ok(doubled as f64 / pairs as f64)
}

/// Refinement AUC: how well top-label confidence ranks correct predictions
/// above incorrect ones.
pub fn auc_refinement(batch: &ProbabilityBatch) -> Result<f64> {
    auc_refinement_with(&batch.confidences(), &batch.correctness())
}

/// Same as [`auc_refinement`] from raw confidence/correctness columns.
pub fn auc_refinement_with(confidences: &[f64], correct: &[bool]) -> Result<f64> {
    let hits: Vec<f64> = confidences.iter().zip(correct).filter(|(_, &c)| c).map(|(&s, _)| s).collect();
    let misses: Vec<f64> = confidences.iter().zip(correct).filter(|(_, &c)| !c).map(|(&s, _)| s).collect();
    if hits.is_empty() || misses.is_empty() {
        return Err(RefcalError::DegenerateSplit);
    }
    rank_auc(&hits, &misses)
}
