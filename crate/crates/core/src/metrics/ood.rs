use serde::{Deserialize, Serialize};

use super::rank_auc;
use crate::error::{RefcalError, Result};

/// Detection metrics for separating in-distribution (positive, higher score)
/// from out-of-distribution samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub fpr_at_tpr95: f64,
    pub detection_error: f64,
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
}

/// (true positives, false positives) after admitting each distinct score,
/// from the highest score down.
fn cumulative_counts(positives: &[f64], negatives: &[f64]) -> Vec<(usize, usize)> {
    let mut scored: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < scored.len() {
        let s = scored[i].0;
        while i < scored.len() && scored[i].0 == s {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((tp, fp));
    }
    out
}

/// Step-wise area under the precision-recall curve.
fn average_precision(positives: &[f64], negatives: &[f64]) -> f64 {
    let total = positives.len() as f64;
    let mut prev_tp = 0;
    let mut area = 0.0;
    for (tp, fp) in cumulative_counts(positives, negatives) {
        if tp > prev_tp {
            area += (tp - prev_tp) as f64 / total * (tp as f64 / (tp + fp) as f64);
            prev_tp = tp;
        }
    }
    area
}

pub fn ood_metrics(id_scores: &[f64], ood_scores: &[f64]) -> Result<OodReport> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(RefcalError::EmptyScores);
    }
    let n_id = id_scores.len();
    let n_ood = ood_scores.len();
    let counts = cumulative_counts(id_scores, ood_scores);

    let fpr_at_tpr95 = counts
        .iter()
        .find(|(tp, _)| tp * 100 >= 95 * n_id)
        .map(|&(_, fp)| fp as f64 / n_ood as f64)
        .unwrap_or(1.0);

    // the empty acceptance set (threshold above every score) errs 1/2
    let detection_error = counts
        .iter()
        .map(|&(tp, fp)| 0.5 * (1.0 - tp as f64 / n_id as f64) + 0.5 * (fp as f64 / n_ood as f64))
        .fold(0.5, f64::min);

    let negated_id: Vec<f64> = id_scores.iter().map(|s| -s).collect();
    let negated_ood: Vec<f64> = ood_scores.iter().map(|s| -s).collect();

    Ok(OodReport {
        fpr_at_tpr95,
        detection_error,
        auroc: rank_auc(id_scores, ood_scores)?,
        aupr_in: average_precision(id_scores, ood_scores),
        aupr_out: average_precision(&negated_ood, &negated_id),
    })
}
