//! Replacing every prediction by a fixed per-class probability vector.
//!
//! When the vectors are the validation confusion rows, the result matches
//! observed frequencies (good calibration scores) while every prediction of a
//! class shares one confidence, erasing any ranking between right and wrong
//! predictions.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{RefcalError, Result};
use crate::metrics::{argmax, ProbabilityBatch, STOCHASTIC_TOL};

/// Binary confusion rows: predicted 0 → (0.7, 0.3), predicted 1 → (0.2, 0.8).
pub const INSIGHT_ROWS: [[f64; 2]; 2] = [[0.7, 0.3], [0.2, 0.8]];

/// Row `c`: distribution of true labels among samples predicted as `c`.
/// Classes never predicted get the one-hot row for themselves.
pub fn confusion_rows(validation: &ProbabilityBatch) -> Array2<f64> {
    let k = validation.num_classes();
    let mut counts = Array2::<f64>::zeros((k, k));
    for i in 0..validation.len() {
        counts[[validation.predicted(i), validation.labels()[i]]] += 1.0;
    }
    for (c, mut row) in counts.rows_mut().into_iter().enumerate() {
        let total = row.sum();
        if total == 0.0 {
            row[c] = 1.0;
        } else {
            row /= total;
        }
    }
    counts
}

/// Replaces each sample's probabilities by the row of its predicted class.
pub fn pitfall_transform(predictions: &ProbabilityBatch, rows: &Array2<f64>) -> Result<ProbabilityBatch> {
    let k = predictions.num_classes();
    if rows.dim() != (k, k) {
        return Err(RefcalError::ShapeMismatch(format!("confusion rows are {:?}, expected ({k}, {k})", rows.dim())));
    }
    for (c, row) in rows.rows().into_iter().enumerate() {
        let sum = row.sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(RefcalError::RowNotStochastic { row: c, sum });
        }
        let top = argmax(row.iter().copied());
        if top != c {
            return Err(RefcalError::RowArgmaxMismatch { class: c, argmax: top });
        }
    }
    let mut probs = Array2::zeros((predictions.len(), k));
    for (i, mut out) in probs.rows_mut().into_iter().enumerate() {
        out.assign(&rows.row(predictions.predicted(i)));
    }
    ProbabilityBatch::new(probs, predictions.labels().to_vec())
}

/// Binary predictions whose correctness rate per predicted class matches
/// [`INSIGHT_ROWS`] and whose confidence separates right from wrong:
/// correct predictions draw confidence from U(0.75, 1), wrong ones from
/// U(0.5, 0.75).
pub fn insight_scenario(n: usize, seed: u64) -> Result<ProbabilityBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let predicted = rng.random_range(0..2usize);
        let correct = rng.random_bool(INSIGHT_ROWS[predicted][predicted]);
        let conf = if correct { rng.random_range(0.75..1.0) } else { rng.random_range(0.5..0.75) };
        probs[[i, predicted]] = conf;
        probs[[i, 1 - predicted]] = 1.0 - conf;
        labels.push(if correct { predicted } else { 1 - predicted });
    }
    ProbabilityBatch::new(probs, labels)
}
