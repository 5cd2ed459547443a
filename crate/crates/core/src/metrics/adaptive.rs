use super::ProbabilityBatch;
use crate::error::{RefcalError, Result};

/// Adaptive calibration error: per class, the probability column is sorted
/// and cut into `ranges` groups of `floor(N / ranges)` samples (the last group
/// takes the remainder); the mean absolute gap between the fraction of that
/// class and the mean probability is averaged over all (range, class) cells.
pub fn ace(batch: &ProbabilityBatch, ranges: usize) -> Result<f64> {
    let n = batch.len();
    if ranges == 0 || n < ranges {
        return Err(RefcalError::TooFewSamples { needed: ranges.max(1), have: n });
    }
    let k = batch.num_classes();
    let width = n / ranges;
    let mut total = 0.0;
    for class in 0..k {
        let column = batch.probs().column(class);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
        for r in 0..ranges {
            let lo = r * width;
            let hi = if r + 1 == ranges { n } else { lo + width };
            let members = &order[lo..hi];
            let len = members.len() as f64;
            let acc = members.iter().filter(|&&i| batch.labels()[i] == class).count() as f64 / len;
            let conf = members.iter().map(|&i| column[i]).sum::<f64>() / len;
            total += (acc - conf).abs();
        }
    }
    Ok(total / (k * ranges) as f64)
}
