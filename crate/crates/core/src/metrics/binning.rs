use serde::{Deserialize, Serialize};

use super::ProbabilityBatch;
use crate::error::{RefcalError, Result};

/// Zero-based bin for `value` among `bins` intervals `((i-1)/M, i/M]`.
/// A value of exactly 0 goes to the first bin.
pub fn bin_index(value: f64, bins: usize) -> usize {
    let m = bins as f64;
    let mut idx = ((value * m).ceil() as isize - 1).clamp(0, bins as isize - 1) as usize;
    // correct for rounding in value * m near an edge
    if idx > 0 && value <= idx as f64 / m {
        idx -= 1;
    } else if idx + 1 < bins && value > (idx + 1) as f64 / m {
        idx += 1;
    }
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Fraction of hits in the bin (0 when empty).
    pub accuracy: f64,
    /// Mean value in the bin (0 when empty).
    pub confidence: f64,
}

/// Equal-width reliability bins over top-label confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    pub total: usize,
    pub bins: Vec<Bin>,
}

impl BinTable {
    fn build(values: &[f64], hits: &[bool], bins: usize) -> Self {
        let mut count = vec![0usize; bins];
        let mut hit = vec![0usize; bins];
        let mut sum = vec![0.0; bins];
        for (&v, &h) in values.iter().zip(hits) {
            let b = bin_index(v, bins);
            count[b] += 1;
            hit[b] += h as usize;
            sum[b] += v;
        }
        let bins = (0..bins)
            .map(|b| {
                let (accuracy, confidence) = if count[b] == 0 {
                    (0.0, 0.0)
                } else {
                    (hit[b] as f64 / count[b] as f64, sum[b] / count[b] as f64)
                };
                Bin {
                    lower: b as f64 / bins as f64,
                    upper: (b + 1) as f64 / bins as f64,
                    count: count[b],
                    accuracy,
                    confidence,
                }
            })
            .collect();
        Self { total: values.len(), bins }
    }

    /// Count-weighted mean absolute gap between accuracy and confidence.
    pub fn ece(&self) -> f64 {
        let n = self.total as f64;
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 / n * (b.accuracy - b.confidence).abs())
            .sum()
    }
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(RefcalError::ConfigInvalid("number of bins must be at least 1".into()));
    }
    Ok(())
}

/// Reliability-diagram table over top-label confidences.
pub fn reliability_table(batch: &ProbabilityBatch, bins: usize) -> Result<BinTable> {
    check_bins(bins)?;
    if batch.is_empty() {
        return Err(RefcalError::EmptyBatch);
    }
    Ok(BinTable::build(&batch.confidences(), &batch.correctness(), bins))
}

/// Expected calibration error over top-label confidences.
pub fn ece(batch: &ProbabilityBatch, bins: usize) -> Result<f64> {
    Ok(reliability_table(batch, bins)?.ece())
}

/// Static calibration error: class-conditional binned error over every
/// probability column, averaged over classes.
pub fn sce(batch: &ProbabilityBatch, bins: usize) -> Result<f64> {
    check_bins(bins)?;
    if batch.is_empty() {
        return Err(RefcalError::EmptyBatch);
    }
    let k = batch.num_classes();
    let total: f64 = (0..k)
        .map(|class| {
            let column: Vec<f64> = batch.probs().column(class).to_vec();
            let hits: Vec<bool> = batch.labels().iter().map(|&l| l == class).collect();
            BinTable::build(&column, &hits, bins).ece()
        })
        .sum();
    Ok(total / k as f64)
}
