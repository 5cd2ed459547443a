use std::fmt::Write as _;

use ndarray::Array2;

use super::train::TrainLog;
use crate::error::{RefcalError, Result};
use crate::metrics::{ProbabilityBatch, STOCHASTIC_TOL};

const PREDICTIONS_MAGIC: &str = "# refcal-predictions v1";

/// Per-sample probabilities with the dataset index of each sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDump {
    pub sample_ids: Vec<usize>,
    pub batch: ProbabilityBatch,
}

/// `# refcal-predictions v1 K=<K> N=<N>` followed by
/// `sample_id,label,prob_0,...` rows with 17 significant digits.
pub fn write_predictions(dump: &PredictionDump) -> String {
    let batch = &dump.batch;
    let mut out = String::new();
    let _ = writeln!(out, "{PREDICTIONS_MAGIC} K={} N={}", batch.num_classes(), batch.len());
    for (i, id) in dump.sample_ids.iter().enumerate() {
        let _ = write!(out, "{id},{}", batch.labels()[i]);
        for p in batch.probs().row(i) {
            let _ = write!(out, ",{p:.16e}");
        }
        out.push('\n');
    }
    out
}

fn header_value(header: &str, key: &str) -> Result<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| RefcalError::Parse { line: 1, message: format!("missing or invalid {key}= in header") })
}

pub fn read_predictions(text: &str) -> Result<PredictionDump> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(RefcalError::Parse { line: 1, message: "empty file".into() })?;
    if !header.starts_with(PREDICTIONS_MAGIC) {
        return Err(RefcalError::Parse { line: 1, message: "not a refcal predictions v1 file".into() });
    }
    let k = header_value(header, "K")?;
    let n = header_value(header, "N")?;
    if k < 2 {
        return Err(RefcalError::Parse { line: 1, message: format!("K={k}, need at least 2 classes") });
    }
    let mut ids = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n * k);
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let err = |message: String| RefcalError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 2 {
            return Err(err(format!("expected {} fields, found {}", k + 2, fields.len())));
        }
        ids.push(fields[0].parse::<usize>().map_err(|_| err(format!("bad sample id `{}`", fields[0])))?);
        let label: usize = fields[1].parse().map_err(|_| err(format!("bad label `{}`", fields[1])))?;
        if label >= k {
            return Err(err(format!("label {label} out of range for K={k}")));
        }
        labels.push(label);
        let mut sum = 0.0;
        for f in &fields[2..] {
            let p: f64 = f.parse().map_err(|_| err(format!("bad probability `{f}`")))?;
            if !(p >= 0.0) {
                return Err(err(format!("negative or invalid probability `{f}`")));
            }
            sum += p;
            probs.push(p);
        }
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(err(format!("probabilities sum to {sum}")));
        }
    }
    if labels.len() != n {
        return Err(RefcalError::Parse {
            line: labels.len() + 2,
            message: format!("header declares N={n}, found {} rows", labels.len()),
        });
    }
    let probs = Array2::from_shape_vec((n, k), probs).expect("checked field counts");
    Ok(PredictionDump { sample_ids: ids, batch: ProbabilityBatch::new(probs, labels)? })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.16e}"))
}

/// CSV `epoch,stage,loss,val_top1,val_auc,val_ece`; validation columns are
/// empty where they do not apply.
pub fn write_training_log(log: &TrainLog) -> String {
    let mut out = String::from("epoch,stage,loss,val_top1,val_auc,val_ece\n");
    for row in &log.rows {
        let _ = writeln!(
            out,
            "{},{},{:.16e},{},{},{}",
            row.epoch,
            row.stage.as_str(),
            row.loss,
            opt(row.val_top1),
            opt(row.val_auc),
            opt(row.val_ece)
        );
    }
    out
}
