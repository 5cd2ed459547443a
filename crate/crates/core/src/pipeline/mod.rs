//! Two-stage training, single-stage baselines, evaluation into reliability
//! reports, and the post-hoc confusion-row transform.

mod dump;
mod pitfall;
mod train;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use dump::{read_predictions, write_predictions, write_training_log, PredictionDump};
pub use pitfall::{confusion_rows, insight_scenario, pitfall_transform, INSIGHT_ROWS};
pub use train::{
    train_baseline, train_refcal, LogRow, ModelSelection, Stage, Stage1Config, Stage2Config, SurrogateTrace,
    TrainConfig, TrainLog,
};

use crate::datagen::{Split, SyntheticDataset};
use crate::error::{RefcalError, Result};
use crate::losses::softmax_rows;
use crate::metrics::{
    ace, auc_refinement, reliability_table, sce, smece, BinTable, ProbabilityBatch, DEFAULT_ACE_RANGES, DEFAULT_BINS,
    DEFAULT_SMECE_BANDWIDTH,
};
use crate::network::NetworkParams;

/// Metric hyperparameters used when building a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub bins: usize,
    pub ace_ranges: usize,
    pub smece_bandwidth: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS, ace_ranges: DEFAULT_ACE_RANGES, smece_bandwidth: DEFAULT_SMECE_BANDWIDTH }
    }
}

/// Every reported metric, as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub top1: f64,
    /// `None` when every prediction is correct (or every one is wrong).
    pub auc: Option<f64>,
    pub ece: f64,
    pub sce: f64,
    /// `None` when there are fewer samples than ACE ranges.
    pub ace: Option<f64>,
    pub smece: f64,
    pub bin_table: BinTable,
    pub config_fingerprint: String,
    pub seed: u64,
}

impl ReliabilityReport {
    pub fn from_batch(batch: &ProbabilityBatch, metrics: &MetricConfig, fingerprint: &str, seed: u64) -> Result<Self> {
        let auc = match auc_refinement(batch) {
            Ok(v) => Some(v),
            Err(RefcalError::DegenerateSplit) => None,
            Err(e) => return Err(e),
        };
        let bin_table = reliability_table(batch, metrics.bins)?;
        Ok(Self {
            top1: batch.top1(),
            auc,
            ece: bin_table.ece(),
            sce: sce(batch, metrics.bins)?,
            ace: match ace(batch, metrics.ace_ranges) {
                Ok(v) => Some(v),
                Err(RefcalError::TooFewSamples { .. }) => None,
                Err(e) => return Err(e),
            },
            smece: smece(batch, metrics.smece_bandwidth)?,
            bin_table,
            config_fingerprint: fingerprint.to_string(),
            seed,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One-line percentage summary.
    pub fn summary(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |a| format!("{:.2}", 100.0 * a));
        format!(
            "Top-1 {:.2}  AUC {}  ECE {:.2}  SCE {:.2}  ACE {}  smECE {:.2}",
            100.0 * self.top1,
            pct(self.auc),
            100.0 * self.ece,
            100.0 * self.sce,
            pct(self.ace),
            100.0 * self.smece
        )
    }
}

/// Report plus the raw predictions it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: ReliabilityReport,
    pub predictions: PredictionDump,
}

/// Softmax probabilities of the model on raw inputs.
pub fn predict(params: &NetworkParams, inputs: ArrayView2<'_, f64>, labels: Vec<usize>) -> Result<ProbabilityBatch> {
    ProbabilityBatch::new(softmax_rows(&params.logits(inputs)?), labels)
}

/// Runs the model on one split and computes every metric.
pub fn evaluate(
    params: &NetworkParams,
    dataset: &SyntheticDataset,
    split: Split,
    metrics: &MetricConfig,
    fingerprint: &str,
    seed: u64,
) -> Result<Evaluation> {
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(RefcalError::EmptySplit(split.as_str().into()));
    }
    let (x, y) = dataset.subset(split);
    let batch = predict(params, x.view(), y)?;
    let report = ReliabilityReport::from_batch(&batch, metrics, fingerprint, seed)?;
    Ok(Evaluation { report, predictions: PredictionDump { sample_ids: idx, batch } })
}

/// 64-bit FNV-1a of a string, as 16 hex digits.
pub fn fingerprint(text: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
