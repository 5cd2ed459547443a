use ndarray::Array2;

use crate::error::{RefcalError, Result};

use super::LossValue;

/// Row-wise log-softmax, stabilized by the row maximum.
pub fn log_softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    log_softmax_rows(logits).mapv(f64::exp)
}

fn check_labels(logits: &Array2<f64>, labels: &[usize]) -> Result<()> {
    let (n, k) = logits.dim();
    if labels.len() != n {
        return Err(RefcalError::ShapeMismatch(format!("{} labels for {} rows", labels.len(), n)));
    }
    if n == 0 {
        return Err(RefcalError::EmptyBatch);
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(RefcalError::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

/// Mean negative log-likelihood of the true class.
pub fn nll_loss(logits: &Array2<f64>, labels: &[usize], want_gradient: bool) -> Result<LossValue> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let logp = log_softmax_rows(logits);
    let value = labels.iter().enumerate().map(|(i, &y)| -logp[[i, y]]).sum::<f64>() / n;
    let gradient = want_gradient.then(|| {
        let mut g = logp.mapv(f64::exp);
        for (i, &y) in labels.iter().enumerate() {
            g[[i, y]] -= 1.0;
        }
        g / n
    });
    Ok(LossValue { value, gradient })
}

/// Target distribution with `1 - epsilon` on the true class and
/// `epsilon / (k - 1)` on every other class.
pub fn smoothed_targets(label: usize, classes: usize, epsilon: f64) -> Vec<f64> {
    let off = if classes > 1 { epsilon / (classes - 1) as f64 } else { 0.0 };
    (0..classes).map(|c| if c == label { 1.0 - epsilon } else { off }).collect()
}

/// Cross-entropy against label-smoothed targets. `epsilon = 0` is the plain
/// negative log-likelihood.
pub fn label_smoothing_loss(
    logits: &Array2<f64>,
    labels: &[usize],
    epsilon: f64,
    want_gradient: bool,
) -> Result<LossValue> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(RefcalError::EpsilonOutOfRange(epsilon));
    }
    if epsilon == 0.0 {
        return nll_loss(logits, labels, want_gradient);
    }
    check_labels(logits, labels)?;
    let k = logits.ncols();
    if k < 2 {
        return Err(RefcalError::ShapeMismatch("label smoothing needs at least 2 classes".into()));
    }
    let n = labels.len() as f64;
    let logp = log_softmax_rows(logits);
    let mut value = 0.0;
    let mut grad = want_gradient.then(|| Array2::zeros(logits.dim()));
    for (i, &y) in labels.iter().enumerate() {
        let targets = smoothed_targets(y, k, epsilon);
        value -= targets.iter().enumerate().map(|(c, t)| t * logp[[i, c]]).sum::<f64>();
        if let Some(g) = grad.as_mut() {
            for c in 0..k {
                g[[i, c]] = (logp[[i, c]].exp() - targets[c]) / n;
            }
        }
    }
    Ok(LossValue { value: value / n, gradient: grad })
}

/// Mean focal loss `(1 - p_y)^gamma * (-log p_y)`. `gamma = 0` is the plain
/// negative log-likelihood.
pub fn focal_loss(logits: &Array2<f64>, labels: &[usize], gamma: f64, want_gradient: bool) -> Result<LossValue> {
    if !(gamma >= 0.0) {
        return Err(RefcalError::NegativeGamma(gamma));
    }
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let k = logits.ncols();
    let logp = log_softmax_rows(logits);
    let mut value = 0.0;
    let mut grad = want_gradient.then(|| Array2::zeros(logits.dim()));
    for (i, &y) in labels.iter().enumerate() {
        let log_py = logp[[i, y]];
        let py = log_py.exp();
        // 1 - p_y without cancellation when p_y is close to 1
        let q = -log_py.exp_m1();
        let weight = q.powf(gamma);
        value += -weight * log_py;
        if let Some(g) = grad.as_mut() {
            // d loss / d z_c = [gamma q^(gamma-1) p log p - q^gamma] (delta_yc - p_c)
            let focus = if gamma == 0.0 || q == 0.0 { 0.0 } else { gamma * q.powf(gamma - 1.0) * py * log_py };
            let scale = focus - weight;
            for c in 0..k {
                let delta = if c == y { 1.0 } else { 0.0 };
                g[[i, c]] = scale * (delta - logp[[i, c]].exp()) / n;
            }
        }
    }
    Ok(LossValue { value: value / n, gradient: grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_log_two() {
        let v = nll_loss(&array![[0.0, 0.0]], &[0], false).unwrap();
        assert!((v.value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_logits_are_stable() {
        let v = nll_loss(&array![[1000.0, 0.0]], &[0], true).unwrap();
        assert!(v.value.abs() < 1e-300 || v.value == 0.0);
        assert!(v.gradient.unwrap().iter().all(|g| g.is_finite()));
        let f = focal_loss(&array![[1000.0, 0.0], [0.0, 1000.0]], &[0, 0], 2.0, true).unwrap();
        assert!(f.value.is_finite());
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            nll_loss(&array![[0.0, 0.0]], &[2], false),
            Err(RefcalError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn smoothing_targets_for_ten_classes() {
        let t = smoothed_targets(3, 10, 0.1);
        assert_eq!(t[3], 0.9);
        for (c, v) in t.iter().enumerate() {
            if c != 3 {
                assert!((v - 0.1 / 9.0).abs() < 1e-15);
                assert!((v - 0.011111).abs() < 1e-6);
            }
        }
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reductions_to_nll() {
        let logits = array![[0.3, -1.2, 2.0], [1.0, 0.5, -0.5]];
        let labels = [2, 1];
        let base = nll_loss(&logits, &labels, true).unwrap();
        let ls = label_smoothing_loss(&logits, &labels, 0.0, true).unwrap();
        let fl = focal_loss(&logits, &labels, 0.0, true).unwrap();
        assert!((base.value - ls.value).abs() < 1e-12);
        assert!((base.value - fl.value).abs() < 1e-12);
        let gb = base.gradient.unwrap();
        for (a, b) in gb.iter().zip(fl.gradient.unwrap().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_half_probability() {
        // p_y = 0.5 with two equal logits
        let v = focal_loss(&array![[0.0, 0.0]], &[1], 2.0, false).unwrap();
        assert!((v.value - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((v.value - 0.17329).abs() < 1e-5);
    }

    #[test]
    fn parameter_validation() {
        let l = array![[0.0, 0.0]];
        assert!(matches!(label_smoothing_loss(&l, &[0], 1.0, false), Err(RefcalError::EpsilonOutOfRange(_))));
        assert!(matches!(focal_loss(&l, &[0], -1.0, false), Err(RefcalError::NegativeGamma(_))));
    }
}
