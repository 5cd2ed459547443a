use serde::Serialize;

use crate::embeddings::{dot, similarity_from_distance, EmbeddingBatch};
use crate::error::{RefcalError, Result};
use crate::exec::{map_indexed, ordered_sum, ExecMode};

use super::{refinement_loss_with, supcon_loss_with};

/// Roundoff allowance for each non-strict step of the chain.
pub const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStep {
    pub name: &'static str,
    pub value: f64,
}

/// Contrastive loss at unit temperature, the refinement loss, and the
/// intermediate lower bounds linking them, ordered from the contrastive loss
/// down to the refinement loss.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub l_sc_tau1: f64,
    pub l_ref: f64,
    pub margin: f64,
    pub chain: Vec<ChainStep>,
}

impl BoundReport {
    /// Every value from `l_sc_tau1` through the chain to `l_ref`.
    pub fn sequence(&self) -> Vec<f64> {
        let mut seq = Vec::with_capacity(self.chain.len() + 2);
        seq.push(self.l_sc_tau1);
        seq.extend(self.chain.iter().map(|s| s.value));
        seq.push(self.l_ref);
        seq
    }

    /// Smallest consecutive decrease along the sequence (negative means a
    /// step went up).
    pub fn worst_step(&self) -> f64 {
        self.sequence().windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self) -> bool {
        self.margin > 0.0 && self.worst_step() >= -BOUND_SLACK
    }
}

struct AnchorBounds {
    jensen: f64,
    drop_one: f64,
    max_lse: f64,
    distance_form: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Evaluates the contrastive/refinement bound chain on a batch and fails with
/// `BoundViolation` if any step is out of order.
pub fn verify_bound(batch: &EmbeddingBatch) -> Result<BoundReport> {
    verify_bound_with(batch, ExecMode::default())
}

pub fn verify_bound_with(batch: &EmbeddingBatch, mode: ExecMode) -> Result<BoundReport> {
    batch.require_pairs(true)?;
    let l_sc_tau1 = supcon_loss_with(batch, 1.0, false, mode)?.value;
    let l_ref = refinement_loss_with(batch, mode)?.value;
    let labels = batch.labels();
    let n = batch.len();

    let per_anchor = map_indexed(n, mode, |i| {
        let zi = batch.row(i);
        let (pos, neg) = batch.partition(i);
        let sim = |j: usize| dot(zi, batch.row(j));
        let lse_all = log_sum_exp((0..n).filter(|&a| a != i).map(sim));
        let lse_pos = log_sum_exp(pos.iter().map(|&p| sim(p)));
        let lse_neg = log_sum_exp(neg.iter().map(|&q| sim(q)));
        let log_p = (pos.len() as f64).ln();
        let max_pos = pos.iter().map(|&p| sim(p)).fold(f64::NEG_INFINITY, f64::max);
        let max_neg = neg.iter().map(|&q| sim(q)).fold(f64::NEG_INFINITY, f64::max);
        let dist_sim = |j: usize| similarity_from_distance(zi, batch.row(j));
        let dmax_pos = pos.iter().map(|&p| dist_sim(p)).fold(f64::NEG_INFINITY, f64::max);
        let dmax_neg = neg.iter().map(|&q| dist_sim(q)).fold(f64::NEG_INFINITY, f64::max);
        debug_assert_eq!(pos.len() + neg.len(), labels.len() - 1);
        AnchorBounds {
            // -log(mean_p e^{s_p} / sum_a e^{s_a})
            jensen: lse_all - lse_pos + log_p,
            // log(sum_n e^{s_n} / sum_p e^{s_p}) + log|P|
            drop_one: lse_neg - lse_pos + log_p,
            // (max_n s_n - (max_p s_p + log|P|)) + log|P|
            max_lse: (max_neg - (max_pos + log_p)) + log_p,
            distance_form: dmax_neg - dmax_pos,
        }
    });

    let sum = |f: fn(&AnchorBounds) -> f64| ordered_sum(&per_anchor.iter().map(f).collect::<Vec<_>>());
    let chain = vec![
        ChainStep { name: "jensen", value: sum(|a| a.jensen) },
        ChainStep { name: "drop_one", value: sum(|a| a.drop_one) },
        ChainStep { name: "max_log_sum_exp", value: sum(|a| a.max_lse) },
        ChainStep { name: "distance_form", value: sum(|a| a.distance_form) },
    ];
    let report = BoundReport { l_sc_tau1, l_ref, margin: l_sc_tau1 - l_ref, chain };
    if report.holds() {
        Ok(report)
    } else {
        Err(RefcalError::BoundViolation(Box::new(report)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn antipodal_margin() {
        let b = EmbeddingBatch::new(
            array![[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [-1.0, 0.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let r = verify_bound(&b).unwrap();
        let expected = 4.0 * (1.0 + 2.0 * (-2.0f64).exp()).ln() + 8.0;
        assert!((r.margin - expected).abs() < 1e-12);
        assert!((r.margin - 8.9582).abs() < 1e-4);
        assert_eq!(r.chain.len(), 4);
    }

    #[test]
    fn square_margin() {
        let b = EmbeddingBatch::new(
            array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let r = verify_bound(&b).unwrap();
        assert!((r.margin - 4.0 * (2.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!(r.worst_step() >= -BOUND_SLACK);
    }

    #[test]
    fn tampered_report_is_flagged() {
        let b = EmbeddingBatch::new(
            array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            vec![0, 0, 1, 1],
            2,
        )
        .unwrap();
        let mut r = verify_bound(&b).unwrap();
        r.chain[1].value = r.chain[0].value + 1.0;
        assert!(!r.holds());
    }
}
