use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::predict;
use crate::datagen::{Split, SyntheticDataset};
use crate::embeddings::EmbeddingBatch;
use crate::error::{RefcalError, Result};
use crate::losses::{refinement_loss, supcon_loss, CalibrationLossSpec};
use crate::metrics::{auc_refinement, ece, DEFAULT_BINS};
use crate::network::{fit_temperature, sgd_step, Architecture, Head, NetworkParams, OptimizerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub loss: CalibrationLossSpec,
    pub apply_temperature_scaling: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    /// Keep the epoch with the best validation Top-1 (earliest on ties).
    BestValTop1,
    FinalEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub selection: ModelSelection,
    pub hidden: Vec<usize>,
    pub representation_dim: usize,
    pub projection_dim: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale defaults: 200 contrastive epochs, 50 classifier epochs.
    pub fn desk(seed: u64) -> Self {
        Self {
            stage1: Stage1Config { epochs: 200, batch_size: 128, lr: 0.05, momentum: 0.9, tau: 0.1 },
            stage2: Stage2Config {
                epochs: 50,
                batch_size: 64,
                lr: 0.05,
                momentum: 0.9,
                loss: CalibrationLossSpec::Nll,
                apply_temperature_scaling: false,
            },
            selection: ModelSelection::BestValTop1,
            hidden: vec![64],
            representation_dim: 32,
            projection_dim: 16,
            seed,
        }
    }

    /// Epoch counts of the full-scale schedule (1000 / 100).
    pub fn full_schedule(seed: u64) -> Self {
        let mut c = Self::desk(seed);
        c.stage1.epochs = 1000;
        c.stage2.epochs = 100;
        c
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> Architecture {
        Architecture {
            input_dim,
            hidden: self.hidden.clone(),
            representation_dim: self.representation_dim,
            projection_dim: self.projection_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RefcalError::ConfigInvalid(m));
        if self.stage1.batch_size < 2 || self.stage2.batch_size < 1 {
            return bad("batch sizes must be at least 2 (stage 1) and 1 (stage 2)".into());
        }
        if !(self.stage1.tau > 0.0) {
            return Err(RefcalError::NonPositiveTemperature(self.stage1.tau));
        }
        for (name, lr, m) in [("stage1", self.stage1.lr, self.stage1.momentum), ("stage2", self.stage2.lr, self.stage2.momentum)] {
            if !(lr > 0.0) || !(0.0..1.0).contains(&m) {
                return bad(format!("{name}: need lr > 0 and momentum in [0, 1)"));
            }
        }
        if self.representation_dim == 0 || self.projection_dim == 0 || self.hidden.contains(&0) {
            return bad("layer sizes must be positive".into());
        }
        self.stage2.loss.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Refine,
    Calibrate,
    Baseline,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Refine => "stage1",
            Stage::Calibrate => "stage2",
            Stage::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub stage: Stage,
    pub loss: f64,
    pub val_top1: Option<f64>,
    pub val_auc: Option<f64>,
    pub val_ece: Option<f64>,
}

/// Contrastive and refinement loss on the whole training split before and
/// after stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateTrace {
    pub supcon_initial: f64,
    pub supcon_final: f64,
    pub refinement_initial: f64,
    pub refinement_final: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub surrogate: Option<SurrogateTrace>,
    /// Classifier epoch whose parameters were kept.
    pub selected_epoch: Option<usize>,
    pub temperature: f64,
}

/// Per-class cycling queues, reshuffled whenever exhausted.
struct BalancedSampler {
    queues: Vec<Vec<usize>>,
    cursor: Vec<usize>,
}

impl BalancedSampler {
    fn new(labels: &[usize], num_classes: usize) -> Self {
        let mut queues = vec![Vec::new(); num_classes];
        for (i, &l) in labels.iter().enumerate() {
            queues[l].push(i);
        }
        queues.retain(|q| !q.is_empty());
        let cursor = vec![usize::MAX; queues.len()];
        Self { queues, cursor }
    }

    fn draw(&mut self, class: usize, rng: &mut ChaCha8Rng) -> usize {
        let queue = &mut self.queues[class];
        if self.cursor[class] >= queue.len() {
            queue.shuffle(rng);
            self.cursor[class] = 0;
        }
        let item = queue[self.cursor[class]];
        self.cursor[class] += 1;
        item
    }

    /// Equal share of the batch per present class, at least two each.
    fn batch(&mut self, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let classes = self.queues.len();
        let per_class = (batch_size / classes).max(2);
        let mut out = Vec::with_capacity(per_class * classes);
        for c in 0..classes {
            for _ in 0..per_class {
                out.push(self.draw(c, rng));
            }
        }
        out
    }
}

fn train_split(dataset: &SyntheticDataset) -> Result<(Array2<f64>, Vec<usize>)> {
    let (x, y) = dataset.subset(Split::Train);
    if y.is_empty() {
        return Err(RefcalError::EmptySplit("train".into()));
    }
    Ok((x, y))
}

fn surrogate_values(params: &NetworkParams, x: &Array2<f64>, y: &[usize], k: usize, tau: f64) -> Result<(f64, f64)> {
    let batch = EmbeddingBatch::new(params.embed(x.view())?, y.to_vec(), k)?;
    let n = y.len() as f64;
    Ok((supcon_loss(&batch, tau, false)?.value / n, refinement_loss(&batch)?.value / n))
}

fn run_stage1(
    params: &mut NetworkParams,
    dataset: &SyntheticDataset,
    cfg: &Stage1Config,
    rng: &mut ChaCha8Rng,
    log: &mut TrainLog,
) -> Result<()> {
    let (x, y) = train_split(dataset)?;
    let k = dataset.num_classes();
    let (supcon_initial, refinement_initial) = surrogate_values(params, &x, &y, k, cfg.tau)?;

    let mut sampler = BalancedSampler::new(&y, k);
    let mut opt = OptimizerState::new(cfg.lr, cfg.momentum)?;
    let batches = y.len().div_ceil(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for _ in 0..batches {
            let idx = sampler.batch(cfg.batch_size, rng);
            let xb = x.select(Axis(0), &idx);
            let yb: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let emb = EmbeddingBatch::new(params.embed(xb.view())?, yb, k)?;
            let loss = supcon_loss(&emb, cfg.tau, true)?;
            let scale = 1.0 / idx.len() as f64;
            let upstream = loss.gradient.expect("gradient requested") * scale;
            let grads = params.backward(xb.view(), &upstream, Head::Projection, false)?;
            sgd_step(params, &grads, &mut opt)?;
            total += loss.value * scale;
        }
        if !total.is_finite() {
            return Err(RefcalError::Diverged { stage: Stage::Refine.as_str(), epoch });
        }
        log.rows.push(LogRow {
            epoch,
            stage: Stage::Refine,
            loss: total / batches as f64,
            val_top1: None,
            val_auc: None,
            val_ece: None,
        });
    }

    let (supcon_final, refinement_final) = surrogate_values(params, &x, &y, k, cfg.tau)?;
    log.surrogate = Some(SurrogateTrace { supcon_initial, supcon_final, refinement_initial, refinement_final });
    Ok(())
}

fn run_classifier_stage(
    params: &mut NetworkParams,
    dataset: &SyntheticDataset,
    cfg: &Stage2Config,
    selection: ModelSelection,
    stage: Stage,
    rng: &mut ChaCha8Rng,
    log: &mut TrainLog,
) -> Result<()> {
    let frozen = stage == Stage::Calibrate;
    let (x, y) = train_split(dataset)?;
    let (xv, yv) = dataset.subset(Split::Val);
    if yv.is_empty() {
        return Err(RefcalError::EmptyValidation);
    }
    let mut opt = OptimizerState::new(cfg.lr, cfg.momentum)?;
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut best: Option<(f64, usize, NetworkParams)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let logits = params.logits(xb.view())?;
            let loss = cfg.loss.evaluate(&logits, &yb, true)?;
            let upstream = loss.gradient.expect("gradient requested");
            let grads = params.backward(xb.view(), &upstream, Head::Classifier, frozen)?;
            sgd_step(params, &grads, &mut opt)?;
            total += loss.value;
            batches += 1;
        }
        if !total.is_finite() {
            return Err(RefcalError::Diverged { stage: stage.as_str(), epoch });
        }

        let val = predict(params, xv.view(), yv.clone())?;
        let top1 = val.top1();
        log.rows.push(LogRow {
            epoch,
            stage,
            loss: total / batches as f64,
            val_top1: Some(top1),
            val_auc: auc_refinement(&val).ok(),
            val_ece: Some(ece(&val, DEFAULT_BINS)?),
        });
        if selection == ModelSelection::BestValTop1 && best.as_ref().is_none_or(|(b, _, _)| top1 > *b) {
            best = Some((top1, epoch, params.clone()));
        }
    }

    match best {
        Some((_, epoch, snapshot)) => {
            *params = snapshot;
            log.selected_epoch = Some(epoch);
        }
        None => log.selected_epoch = cfg.epochs.checked_sub(1),
    }

    if cfg.apply_temperature_scaling {
        params.temperature = 1.0;
        let logits = params.logits(xv.view())?;
        params.temperature = fit_temperature(&logits, &yv)?;
    }
    log.temperature = params.temperature;
    Ok(())
}

fn check_dataset(dataset: &SyntheticDataset) -> Result<()> {
    for (class, &c) in dataset.class_counts(Some(Split::Train)).iter().enumerate() {
        if c == 1 {
            return Err(RefcalError::ConfigInvalid(format!(
                "class {class} has a single training sample; contrastive batches need two"
            )));
        }
    }
    Ok(())
}

/// Contrastive pretraining of encoder and projection head, then training of
/// the classifier on the frozen encoder with the configured calibration loss.
pub fn train_refcal(dataset: &SyntheticDataset, config: &TrainConfig) -> Result<(NetworkParams, TrainLog)> {
    config.validate()?;
    check_dataset(dataset)?;
    let mut params = NetworkParams::init(&config.architecture(dataset.dim(), dataset.num_classes()), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_cafe);
    let mut log = TrainLog { temperature: 1.0, ..TrainLog::default() };
    if config.stage1.epochs > 0 {
        run_stage1(&mut params, dataset, &config.stage1, &mut rng, &mut log)?;
    }
    run_classifier_stage(&mut params, dataset, &config.stage2, config.selection, Stage::Calibrate, &mut rng, &mut log)?;
    Ok((params, log))
}

/// End-to-end training of encoder and classifier with the stage-2 settings.
pub fn train_baseline(dataset: &SyntheticDataset, config: &TrainConfig) -> Result<(NetworkParams, TrainLog)> {
    config.validate()?;
    let mut params = NetworkParams::init(&config.architecture(dataset.dim(), dataset.num_classes()), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_cafe);
    let mut log = TrainLog { temperature: 1.0, ..TrainLog::default() };
    run_classifier_stage(&mut params, dataset, &config.stage2, config.selection, Stage::Baseline, &mut rng, &mut log)?;
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_gives_two_per_class() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 2, 2, 2];
        let mut s = BalancedSampler::new(&labels, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let b = s.batch(4, &mut rng);
            for class in 0..3 {
                assert!(b.iter().filter(|&&i| labels[i] == class).count() >= 2);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::desk(1);
        assert!(c.validate().is_ok());
        c.stage1.tau = 0.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk(1);
        c.stage2.loss = CalibrationLossSpec::LabelSmoothing { epsilon: 1.2 };
        assert!(matches!(c.validate(), Err(RefcalError::EpsilonOutOfRange(_))));
    }

    #[test]
    fn divergence_is_reported() {
        let mut b = crate::datagen::BlobConfig::desk(3);
        b.n_max = 100;
        let ds = crate::datagen::generate_blobs(&b).unwrap();
        let mut c = TrainConfig::desk(3);
        c.stage2.lr = 1e6;
        c.stage2.epochs = 20;
        assert!(matches!(train_baseline(&ds, &c), Err(RefcalError::Diverged { stage: "baseline", .. })));
    }
}
