//! Unit-hypersphere embedding batches and the similarity primitives shared by
//! the refinement and contrastive losses.

use ndarray::{Array2, ArrayView2};

use crate::error::{RefcalError, Result};

/// Maximum deviation of a row norm from 1 accepted as "unit".
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Rows with a norm below this cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

/// A batch of unit-norm embeddings with dense integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl EmbeddingBatch {
    /// Wraps vectors that are already unit norm.
    pub fn new(vectors: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let (n, d) = vectors.dim();
        if n < 2 {
            return Err(RefcalError::InvalidBatch(format!("need at least 2 rows, got {n}")));
        }
        if d == 0 {
            return Err(RefcalError::InvalidBatch("embedding dimension is 0".into()));
        }
        if labels.len() != n {
            return Err(RefcalError::ShapeMismatch(format!(
                "{} labels for {} embeddings",
                labels.len(),
                n
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(RefcalError::LabelOutOfRange { label, classes: num_classes });
        }
        for row in vectors.rows() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(RefcalError::NotUnitNorm { norm });
            }
        }
        let vectors = vectors.as_standard_layout().into_owned();
        Ok(Self { vectors, labels, num_classes })
    }

    /// Normalizes raw vectors onto the sphere and wraps them.
    pub fn from_raw(raw: ArrayView2<'_, f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(normalize_to_sphere(raw)?, labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Row `i` as a contiguous slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.vectors.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// Positive and negative index sets of `anchor`.
    pub fn partition(&self, anchor: usize) -> (Vec<usize>, Vec<usize>) {
        partition_sets(&self.labels, anchor)
    }

    /// Checks that every anchor has a non-empty positive and negative set,
    /// reporting the first offending anchor.
    pub fn require_pairs(&self, need_negatives: bool) -> Result<()> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        let present = counts.iter().filter(|&&c| c > 0).count();
        for (anchor, &l) in self.labels.iter().enumerate() {
            if counts[l] < 2 {
                return Err(RefcalError::EmptyPositiveSet { anchor });
            }
            if need_negatives && present < 2 {
                return Err(RefcalError::EmptyNegativeSet { anchor });
            }
        }
        Ok(())
    }
}

/// Divides every row by its Euclidean norm.
pub fn normalize_to_sphere(vectors: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = vectors.as_standard_layout().into_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm >= MIN_NORM) {
            return Err(RefcalError::ZeroVector { row: i });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Half the squared Euclidean distance.
pub fn half_sq_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// `½(2 − ‖z1 − z2‖²)`, equal to the inner product for unit vectors.
pub fn similarity_from_distance(z1: &[f64], z2: &[f64]) -> f64 {
    1.0 - half_sq_distance(z1, z2)
}

fn check_unit(z: &[f64]) -> Result<()> {
    let norm = dot(z, z).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(RefcalError::NotUnitNorm { norm });
    }
    Ok(())
}

/// Cosine similarity of two unit vectors.
pub fn cosine_similarity(z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(RefcalError::ShapeMismatch(format!("{} vs {}", z1.len(), z2.len())));
    }
    check_unit(z1)?;
    check_unit(z2)?;
    Ok(dot(z1, z2))
}

/// `P_i` (same label, excluding the anchor) and `N_i` (different label).
pub fn partition_sets(labels: &[usize], anchor: usize) -> (Vec<usize>, Vec<usize>) {
    let target = labels[anchor];
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for (j, &l) in labels.iter().enumerate() {
        if j == anchor {
            continue;
        }
        if l == target {
            positives.push(j);
        } else {
            negatives.push(j);
        }
    }
    (positives, negatives)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn normalizes_three_four_five() {
        let z = normalize_to_sphere(array![[3.0, 4.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!(z, array![[0.6, 0.8], [1.0, 0.0]]);
    }

    #[test]
    fn zero_row_is_rejected() {
        let err = normalize_to_sphere(array![[1.0, 0.0], [0.0, 0.0]].view()).unwrap_err();
        assert!(matches!(err, RefcalError::ZeroVector { row: 1 }));
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine_similarity(&[1.0, 0.1], &[1.0, 0.0]),
            Err(RefcalError::NotUnitNorm { .. })
        ));
    }

    #[test]
    fn partition_examples() {
        assert_eq!(partition_sets(&[0, 0, 1, 1], 0), (vec![1], vec![2, 3]));
        assert_eq!(partition_sets(&[0, 0, 0], 1), (vec![0, 2], vec![]));
        assert_eq!(partition_sets(&[0, 1], 0), (vec![], vec![1]));
    }

    #[test]
    fn batch_rejects_non_unit_rows() {
        let err = EmbeddingBatch::new(array![[1.0, 0.0], [2.0, 0.0]], vec![0, 0], 1).unwrap_err();
        assert!(matches!(err, RefcalError::NotUnitNorm { .. }));
        let err = EmbeddingBatch::new(array![[1.0, 0.0], [1.0, 0.0]], vec![0, 2], 2).unwrap_err();
        assert!(matches!(err, RefcalError::LabelOutOfRange { label: 2, .. }));
    }

    fn raw_rows() -> impl Strategy<Value = (usize, Vec<f64>)> {
        (1usize..8).prop_flat_map(|d| {
            (Just(d), proptest::collection::vec(-10.0f64..10.0, d * 6))
        })
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent((d, data) in raw_rows()) {
            let raw = Array2::from_shape_vec((6, d), data).unwrap();
            prop_assume!(raw.rows().into_iter().all(|r| r.dot(&r).sqrt() > 1e-3));
            let once = normalize_to_sphere(raw.view()).unwrap();
            let twice = normalize_to_sphere(once.view()).unwrap();
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            for row in once.rows() {
                prop_assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn partition_is_a_partition(labels in proptest::collection::vec(0usize..4, 1..30), pick in 0usize..30) {
            let anchor = pick % labels.len();
            let (p, n) = partition_sets(&labels, anchor);
            prop_assert_eq!(p.len() + n.len(), labels.len() - 1);
            prop_assert!(!p.contains(&anchor) && !n.contains(&anchor));
            prop_assert!(p.iter().all(|j| !n.contains(j)));
        }
    }
}
