use super::ProbabilityBatch;
use crate::error::{RefcalError, Result};
use crate::exec::{map_indexed, ordered_sum, ExecMode};

/// Kernel-smoothed calibration error over top-label confidences.
///
/// Each sample's accuracy is estimated by a Nadaraya-Watson average of the
/// correctness of all samples, weighted by a Gaussian kernel of bandwidth `h`
/// in confidence space; the result is the mean absolute gap between that
/// estimate and the sample's confidence.
pub fn smece(batch: &ProbabilityBatch, bandwidth: f64) -> Result<f64> {
    smece_with(batch, bandwidth, ExecMode::default())
}

pub fn smece_with(batch: &ProbabilityBatch, bandwidth: f64, mode: ExecMode) -> Result<f64> {
    if !(bandwidth > 0.0) {
        return Err(RefcalError::NonPositiveBandwidth(bandwidth));
    }
    let conf = batch.confidences();
    let correct = batch.correctness();
    let denom = 2.0 * bandwidth * bandwidth;
    let gaps = map_indexed(conf.len(), mode, |i| {
        let mut weight_sum = 0.0;
        let mut hit_sum = 0.0;
        for (j, &c) in conf.iter().enumerate() {
            let w = (-(conf[i] - c).powi(2) / denom).exp();
            weight_sum += w;
            if correct[j] {
                hit_sum += w;
            }
        }
        (hit_sum / weight_sum - conf[i]).abs()
    });
    Ok(ordered_sum(&gaps) / conf.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_confidence_all_correct() {
        let b = ProbabilityBatch::new(array![[0.7, 0.3], [0.7, 0.3], [0.3, 0.7]], vec![0, 0, 1]).unwrap();
        for h in [0.01, 0.05, 1.0] {
            assert!((smece(&b, h).unwrap() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_kernel_uses_overall_accuracy() {
        let b = ProbabilityBatch::new(array![[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.55, 0.45]], vec![0, 1, 1, 0])
            .unwrap();
        let acc = b.top1();
        let expected = b.confidences().iter().map(|c| (acc - c).abs()).sum::<f64>() / 4.0;
        assert!((smece(&b, 1e6).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn bandwidth_must_be_positive() {
        let b = ProbabilityBatch::new(array![[0.5, 0.5]], vec![0]).unwrap();
        assert!(matches!(smece(&b, 0.0), Err(RefcalError::NonPositiveBandwidth(_))));
    }
}
