//! Calibration, refinement and out-of-distribution metrics.
//!
//! All metrics are reported as fractions in `[0, 1]`.

mod adaptive;
mod binning;
mod ood;
mod ranking;
mod smooth;

use ndarray::Array2;

pub use adaptive::ace;
pub use binning::{bin_index, ece, reliability_table, sce, Bin, BinTable};
pub use ood::{ood_metrics, OodReport};
pub use ranking::{auc_refinement, auc_refinement_with, rank_auc};
pub use smooth::{smece, smece_with};

use crate::error::{RefcalError, Result};

/// Tolerance on row sums of a probability matrix.
pub const STOCHASTIC_TOL: f64 = 1e-6;

pub const DEFAULT_BINS: usize = 15;
pub const DEFAULT_ACE_RANGES: usize = 15;
pub const DEFAULT_SMECE_BANDWIDTH: f64 = 0.05;

/// Row-stochastic class probabilities with true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityBatch {
    probs: Array2<f64>,
    labels: Vec<usize>,
}

impl ProbabilityBatch {
    pub fn new(probs: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (n, k) = probs.dim();
        if n == 0 {
            return Err(RefcalError::EmptyBatch);
        }
        if k < 2 {
            return Err(RefcalError::ShapeMismatch(format!("need at least 2 classes, got {k}")));
        }
        if labels.len() != n {
            return Err(RefcalError::ShapeMismatch(format!("{} labels for {} rows", labels.len(), n)));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(RefcalError::LabelOutOfRange { label, classes: k });
        }
        for (row, r) in probs.rows().into_iter().enumerate() {
            let sum: f64 = r.sum();
            if r.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(RefcalError::RowNotStochastic { row, sum });
            }
        }
        Ok(Self { probs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Predicted class; ties go to the lowest index.
    pub fn predicted(&self, i: usize) -> usize {
        argmax(self.probs.row(i).iter().copied())
    }

    /// Top-label confidence.
    pub fn confidence(&self, i: usize) -> f64 {
        self.probs.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_correct(&self, i: usize) -> bool {
        self.predicted(i) == self.labels[i]
    }

    pub fn confidences(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.confidence(i)).collect()
    }

    pub fn correctness(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.is_correct(i)).collect()
    }

    pub fn top1(&self) -> f64 {
        self.correctness().iter().filter(|&&c| c).count() as f64 / self.len() as f64
    }
}

/// Index of the largest value, first one on ties.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Accuracy per confidence decile (samples sorted by confidence, index
/// tie-break, split into ten near-equal groups).
pub fn decile_accuracy(batch: &ProbabilityBatch) -> Vec<f64> {
    let conf = batch.confidences();
    let correct = batch.correctness();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));
    let n = order.len();
    (0..10)
        .filter_map(|d| {
            let lo = d * n / 10;
            let hi = (d + 1) * n / 10;
            (hi > lo).then(|| order[lo..hi].iter().filter(|&&i| correct[i]).count() as f64 / (hi - lo) as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(
            ProbabilityBatch::new(array![[0.5, 0.3]], vec![0]),
            Err(RefcalError::RowNotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            ProbabilityBatch::new(Array2::zeros((0, 2)), vec![]),
            Err(RefcalError::EmptyBatch)
        ));
    }

    #[test]
    fn predicted_class_and_confidence() {
        let b = ProbabilityBatch::new(array![[0.2, 0.8], [0.5, 0.5]], vec![1, 1]).unwrap();
        assert_eq!(b.predicted(0), 1);
        assert_eq!(b.predicted(1), 0);
        assert_eq!(b.confidence(0), 0.8);
        assert_eq!(b.top1(), 0.5);
    }
}
