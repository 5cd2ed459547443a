//! Self-contained property sweep: the cosine/distance identity, the
//! contrastive-over-refinement bound chain, analytic gradients against
//! central finite differences, and every metric against a brute-force
//! reference implementation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::embeddings::{dot, normalize_to_sphere, similarity_from_distance, EmbeddingBatch};
use crate::error::{RefcalError, Result};
use crate::exec::ExecMode;
use crate::losses::{supcon_loss_with, verify_bound_with, BoundReport, CalibrationLossSpec, BOUND_SLACK};
use crate::metrics::{ace, auc_refinement, ece, ood_metrics, rank_auc, sce, smece_with, ProbabilityBatch};
use crate::network::{Architecture, Head, NetworkParams};

pub const IDENTITY_TOL: f64 = 1e-9;
pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor of the relative gradient error
/// `|a − n| / max(|a| + |n|, floor)`. Central differences of a loss of size
/// `L` carry roundoff near `ε·L/h ≈ 1e-9`, so entries smaller than the floor
/// are held to an absolute error of `GRAD_TOL · floor = 1e-8` instead.
pub const GRAD_REL_FLOOR: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-10;
// an error must be exactly zero to pass
const EXACT: f64 = f64::MIN_POSITIVE;

const IDENTITY_DIMS: [usize; 3] = [2, 8, 64];
// ReLU pre-activations closer than this to the kink are resampled, since a
// finite-difference step could cross it
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyConfig {
    /// Random pairs per dimension and random batches for the bound sweep.
    pub batches: usize,
    pub gradient_instances: usize,
    pub metric_instances: usize,
    pub seed: u64,
    /// Negates every analytic gradient so the gradient checks must fail.
    pub inject_fault: bool,
    pub mode: ExecMode,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            batches: 1000,
            gradient_instances: 100,
            metric_instances: 100,
            seed: 1234,
            inject_fault: false,
            mode: ExecMode::default(),
        }
    }
}

/// Direction of the `worst` statistic of a property.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Worst {
    /// Largest error; must stay below the tolerance.
    MaxError,
    /// Smallest margin; must stay above the tolerance.
    MinMargin,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    pub worst: f64,
    pub worst_kind: Worst,
    pub tolerance: f64,
}

impl PropertyOutcome {
    fn errors(name: impl Into<String>, tolerance: f64) -> Self {
        Self { name: name.into(), checked: 0, failures: 0, worst: 0.0, worst_kind: Worst::MaxError, tolerance }
    }

    fn margins(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            failures: 0,
            worst: f64::INFINITY,
            worst_kind: Worst::MinMargin,
            tolerance,
        }
    }

    /// Records one observation, counting it as a failure when it is outside
    /// the tolerance (NaN always fails).
    fn record(&mut self, value: f64) {
        self.checked += 1;
        let ok = match self.worst_kind {
            Worst::MaxError => value < self.tolerance,
            Worst::MinMargin => value > self.tolerance,
        };
        if !ok {
            self.failures += 1;
        }
        let worse = match self.worst_kind {
            Worst::MaxError => !(value <= self.worst),
            Worst::MinMargin => !(value >= self.worst),
        };
        if worse && !self.worst.is_nan() {
            self.worst = value;
        }
    }

    fn record_failure(&mut self) {
        self.checked += 1;
        self.failures += 1;
        self.worst = f64::NAN;
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures == 0
    }

    pub fn render(&self) -> String {
        let kind = match self.worst_kind {
            Worst::MaxError => "max error",
            Worst::MinMargin => "min margin",
        };
        let need = match self.worst_kind {
            Worst::MaxError if self.tolerance == EXACT => "exact".to_string(),
            Worst::MaxError => format!("< {:.0e}", self.tolerance),
            Worst::MinMargin => format!("> {:.0e}", self.tolerance),
        };
        format!(
            "{} {:<28} checked {:>5}  failures {:>4}  {kind} {:.3e} (need {need})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checked,
            self.failures,
            self.worst,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub fault_injected: bool,
    pub properties: Vec<PropertyOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyOutcome::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for p in &self.properties {
            out.push_str(&p.render());
            out.push('\n');
        }
        let failed = self.properties.iter().filter(|p| !p.passed()).count();
        out.push_str(&format!("{} properties, {} failed\n", self.properties.len(), failed));
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Runs every property group.
pub fn run(config: &VerifyConfig) -> VerifyReport {
    let mut properties = identity_sweep(config.batches, config.seed);
    let (margin, chain) = bound_sweep(config.batches, config.seed, config.mode);
    properties.push(margin);
    properties.push(chain);
    properties.extend(gradient_checks(config));
    properties.extend(metric_oracles(config.metric_instances, config.seed));
    VerifyReport { seed: config.seed, fault_injected: config.inject_fault, properties }
}

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

// --- identity ---------------------------------------------------------------

/// `z1·z2 = ½(2 − ‖z1 − z2‖²)` on random unit pairs, per dimension.
pub fn identity_sweep(pairs: usize, seed: u64) -> Vec<PropertyOutcome> {
    IDENTITY_DIMS
        .iter()
        .map(|&d| {
            let mut rng = stream(seed, 1 + d as u64);
            let mut p = PropertyOutcome::errors(format!("identity_d{d}"), IDENTITY_TOL);
            for _ in 0..pairs {
                let a = unit_vector(&mut rng, d);
                let b = unit_vector(&mut rng, d);
                p.record((dot(&a, &b) - similarity_from_distance(&a, &b)).abs());
            }
            p
        })
        .collect()
}

// --- bound ------------------------------------------------------------------

/// A random unit-norm batch with N in [4, 128], d in [2, 64], K in [2, 10]
/// and at least two samples in every class.
pub fn random_bound_batch(rng: &mut ChaCha8Rng) -> EmbeddingBatch {
    let n = rng.random_range(4..=128usize);
    let d = rng.random_range(2..=64usize);
    let k = rng.random_range(2..=10usize).min(n / 2);
    let mut labels: Vec<usize> = (0..k).flat_map(|c| [c, c]).collect();
    labels.extend((2 * k..n).map(|_| rng.random_range(0..k)));
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    loop {
        if let Ok(z) = normalize_to_sphere(gaussian(rng, n, d).view()) {
            return EmbeddingBatch::new(z, labels, k).expect("valid by construction");
        }
    }
}

/// Checks the bound `L_SC(τ=1) > L_ref` and each intermediate step of the
/// chain on random batches. Returns (margin, chain) outcomes.
pub fn bound_sweep(batches: usize, seed: u64, mode: ExecMode) -> (PropertyOutcome, PropertyOutcome) {
    let mut rng = stream(seed, 100);
    let mut margin = PropertyOutcome::margins("bound_margin", 0.0);
    let mut chain = PropertyOutcome::margins("bound_chain_steps", -BOUND_SLACK);
    for _ in 0..batches {
        let batch = random_bound_batch(&mut rng);
        let report: BoundReport = match verify_bound_with(&batch, mode) {
            Ok(r) => r,
            Err(RefcalError::BoundViolation(r)) => *r,
            Err(_) => {
                margin.record_failure();
                chain.record_failure();
                continue;
            }
        };
        margin.record(report.margin);
        chain.record(report.worst_step());
    }
    (margin, chain)
}

// --- gradients --------------------------------------------------------------

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(GRAD_REL_FLOOR)
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `x`.
fn max_fd_error(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..x.len() {
        probe[j] = x[j] + GRAD_STEP;
        let up = f(&probe);
        probe[j] = x[j] - GRAD_STEP;
        let down = f(&probe);
        probe[j] = x[j];
        let numeric = (up - down) / (2.0 * GRAD_STEP);
        let e = rel_error(analytic[j], numeric);
        worst = if e.is_nan() { f64::NAN } else { worst.max(e) };
    }
    worst
}

fn random_logits(rng: &mut ChaCha8Rng) -> (Array2<f64>, Vec<usize>) {
    let b = rng.random_range(2..=16usize);
    let k = rng.random_range(2..=10usize);
    let scale = rng.random_range(0.5..4.0);
    let logits = gaussian(rng, b, k) * scale;
    let labels = (0..b).map(|_| rng.random_range(0..k)).collect();
    (logits, labels)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < 2 * k { i / 2 } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    labels
}

fn logit_loss_check(
    name: &str,
    instances: usize,
    rng: &mut ChaCha8Rng,
    sign: f64,
    spec: impl Fn(&mut ChaCha8Rng) -> CalibrationLossSpec,
) -> PropertyOutcome {
    let mut p = PropertyOutcome::errors(name, GRAD_TOL);
    for _ in 0..instances {
        let (logits, labels) = random_logits(rng);
        let spec = spec(rng);
        let eval = |flat: &[f64]| {
            let l = Array2::from_shape_vec(logits.dim(), flat.to_vec()).expect("same shape");
            spec.evaluate(&l, &labels, false).map(|v| v.value).unwrap_or(f64::NAN)
        };
        match spec.evaluate(&logits, &labels, true) {
            Ok(v) => {
                let g: Vec<f64> = v.gradient.expect("requested").iter().map(|x| sign * x).collect();
                let flat: Vec<f64> = logits.iter().copied().collect();
                p.record(max_fd_error(&flat, &g, eval));
            }
            Err(_) => p.record_failure(),
        }
    }
    p
}

/// Contrastive loss of raw vectors after normalization onto the sphere.
fn supcon_of_raw(raw: &Array2<f64>, labels: &[usize], k: usize, tau: f64) -> Result<f64> {
    let batch = EmbeddingBatch::from_raw(raw.view(), labels.to_vec(), k)?;
    Ok(supcon_loss_with(&batch, tau, false, ExecMode::Sequential)?.value)
}

fn supcon_check(instances: usize, rng: &mut ChaCha8Rng, sign: f64) -> PropertyOutcome {
    let mut p = PropertyOutcome::errors("gradient_supcon", GRAD_TOL);
    for _ in 0..instances {
        let k = rng.random_range(2..=4usize);
        let n = rng.random_range(2 * k..=16usize.max(2 * k));
        let d = rng.random_range(2..=8usize);
        let tau = rng.random_range(0.1..1.0);
        let raw = gaussian(rng, n, d);
        let labels = random_labels(rng, n, k);
        let Ok(batch) = EmbeddingBatch::from_raw(raw.view(), labels.clone(), k) else {
            p.record_failure();
            continue;
        };
        let Ok(loss) = supcon_loss_with(&batch, tau, true, ExecMode::Sequential) else {
            p.record_failure();
            continue;
        };
        // chain the unit-embedding gradient through v -> v / ‖v‖
        let g = loss.gradient.expect("requested");
        let mut analytic = Vec::with_capacity(n * d);
        for i in 0..n {
            let v = raw.row(i);
            let norm = v.dot(&v).sqrt();
            let z = batch.row(i);
            let along: f64 = z.iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
            analytic.extend((0..d).map(|j| sign * (g[[i, j]] - z[j] * along) / norm));
        }
        let flat: Vec<f64> = raw.iter().copied().collect();
        p.record(max_fd_error(&flat, &analytic, |x| {
            let r = Array2::from_shape_vec((n, d), x.to_vec()).expect("same shape");
            supcon_of_raw(&r, &labels, k, tau).unwrap_or(f64::NAN)
        }));
    }
    p
}

fn random_net(rng: &mut ChaCha8Rng) -> (NetworkParams, Array2<f64>) {
    let input_dim = rng.random_range(2..=5usize);
    let hidden = (0..rng.random_range(0..=2usize)).map(|_| rng.random_range(2..=6usize)).collect();
    let arch = Architecture {
        input_dim,
        hidden,
        representation_dim: rng.random_range(2..=5usize),
        projection_dim: rng.random_range(2..=4usize),
        num_classes: rng.random_range(2..=4usize),
    };
    loop {
        let mut params = NetworkParams::init(&arch, rng.random());
        // non-zero biases so every block is exercised
        let mut flat = params.flatten();
        flat.iter_mut().for_each(|v| *v += 0.1 * normal(rng));
        params.set_flat(&flat).expect("same size");
        params.temperature = rng.random_range(0.5..2.0);
        let rows = rng.random_range(4..=8usize);
        let inputs = gaussian(rng, rows, input_dim);
        if clear_of_kinks(&params, &inputs) {
            return (params, inputs);
        }
    }
}

fn clear_of_kinks(params: &NetworkParams, inputs: &Array2<f64>) -> bool {
    let mut act = inputs.clone();
    let hidden = params.encoder.len().saturating_sub(1);
    for layer in &params.encoder[..hidden] {
        let pre = act.dot(&layer.weight.t()) + &layer.bias;
        if pre.iter().any(|v| v.abs() < KINK_MARGIN) {
            return false;
        }
        act = pre.mapv(|v| v.max(0.0));
    }
    true
}

fn network_loss(params: &NetworkParams, inputs: &Array2<f64>, labels: &[usize], head: Head, loss: &NetLoss) -> Result<f64> {
    match head {
        Head::Projection => {
            let batch = EmbeddingBatch::new(params.embed(inputs.view())?, labels.to_vec(), params.num_classes())?;
            Ok(supcon_loss_with(&batch, loss.tau, false, ExecMode::Sequential)?.value)
        }
        Head::Classifier => Ok(loss.spec.evaluate(&params.logits(inputs.view())?, labels, false)?.value),
    }
}

struct NetLoss {
    spec: CalibrationLossSpec,
    tau: f64,
}

fn network_check(
    name: &str,
    instances: usize,
    rng: &mut ChaCha8Rng,
    sign: f64,
    head: Head,
    frozen: bool,
) -> PropertyOutcome {
    let mut p = PropertyOutcome::errors(name, GRAD_TOL);
    for i in 0..instances {
        let (params, inputs) = random_net(rng);
        let k = params.num_classes();
        let n = inputs.nrows();
        let labels = if head == Head::Projection {
            random_labels(rng, n, k.min(n / 2))
        } else {
            (0..n).map(|_| rng.random_range(0..k)).collect()
        };
        let spec = match i % 3 {
            0 => CalibrationLossSpec::Nll,
            1 => CalibrationLossSpec::LabelSmoothing { epsilon: rng.random_range(0.0..0.3) },
            _ => CalibrationLossSpec::Focal { gamma: rng.random_range(0.0..3.0) },
        };
        let loss = NetLoss { spec, tau: rng.random_range(0.2..1.0) };

        let upstream = match head {
            Head::Projection => params
                .embed(inputs.view())
                .and_then(|z| EmbeddingBatch::new(z, labels.clone(), k))
                .and_then(|b| supcon_loss_with(&b, loss.tau, true, ExecMode::Sequential)),
            Head::Classifier => params.logits(inputs.view()).and_then(|l| loss.spec.evaluate(&l, &labels, true)),
        };
        let grads = upstream.and_then(|u| params.backward(inputs.view(), &u.gradient.expect("requested"), head, frozen));
        let Ok(grads) = grads else {
            p.record_failure();
            continue;
        };
        let analytic: Vec<f64> = grads.flatten().iter().map(|g| sign * g).collect();
        let base = params.flatten();
        let mut probe = params.clone();
        let enc = params.encoder_scalars();
        if frozen {
            // the encoder must receive exactly nothing; compare only the rest
            if analytic[..enc].iter().any(|&g| g != 0.0) {
                p.record_failure();
                continue;
            }
            let f = |tail: &[f64]| {
                let mut full = base[..enc].to_vec();
                full.extend_from_slice(tail);
                probe.set_flat(&full).expect("same size");
                network_loss(&probe, &inputs, &labels, head, &loss).unwrap_or(f64::NAN)
            };
            p.record(max_fd_error(&base[enc..], &analytic[enc..], f));
        } else {
            let f = |x: &[f64]| {
                probe.set_flat(x).expect("same size");
                network_loss(&probe, &inputs, &labels, head, &loss).unwrap_or(f64::NAN)
            };
            p.record(max_fd_error(&base, &analytic, f));
        }
    }
    p
}

/// Analytic gradients of every loss and of the network compositions against
/// central finite differences.
pub fn gradient_checks(config: &VerifyConfig) -> Vec<PropertyOutcome> {
    let n = config.gradient_instances;
    let sign = if config.inject_fault { -1.0 } else { 1.0 };
    let mut rng = stream(config.seed, 200);
    vec![
        supcon_check(n, &mut rng, sign),
        logit_loss_check("gradient_nll", n, &mut rng, sign, |_| CalibrationLossSpec::Nll),
        logit_loss_check("gradient_label_smoothing", n, &mut rng, sign, |r| CalibrationLossSpec::LabelSmoothing {
            epsilon: r.random_range(0.0..0.5),
        }),
        logit_loss_check("gradient_focal", n, &mut rng, sign, |r| CalibrationLossSpec::Focal {
            gamma: r.random_range(0.0..4.0),
        }),
        network_check("gradient_net_projection", n, &mut rng, sign, Head::Projection, false),
        network_check("gradient_net_classifier", n, &mut rng, sign, Head::Classifier, false),
        network_check("gradient_net_frozen_encoder", n, &mut rng, sign, Head::Classifier, true),
    ]
}

// --- metric oracles ---------------------------------------------------------

/// Brute-force reference implementations: every quantity is computed from
/// its definition with explicit loops and no sorting shortcuts.
pub mod oracle {
    use ndarray::Array2;

    fn in_bin(value: f64, bin: usize, bins: usize) -> bool {
        let lo = bin as f64 / bins as f64;
        let hi = (bin + 1) as f64 / bins as f64;
        (value > lo || (bin == 0 && value >= 0.0)) && value <= hi
    }

    /// Binned calibration error of `values` against `hits`.
    pub fn binned_error(values: &[f64], hits: &[bool], bins: usize) -> f64 {
        let n = values.len() as f64;
        let mut total = 0.0;
        for b in 0..bins {
            let members: Vec<usize> = (0..values.len()).filter(|&i| in_bin(values[i], b, bins)).collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let acc = members.iter().filter(|&&i| hits[i]).count() as f64 / m;
            let conf = members.iter().map(|&i| values[i]).sum::<f64>() / m;
            total += m / n * (acc - conf).abs();
        }
        total
    }

    fn top_label(probs: &Array2<f64>, labels: &[usize]) -> (Vec<f64>, Vec<bool>) {
        let mut conf = Vec::new();
        let mut hit = Vec::new();
        for (row, &y) in probs.rows().into_iter().zip(labels) {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            conf.push(row[best]);
            hit.push(best == y);
        }
        (conf, hit)
    }

    pub fn ece(probs: &Array2<f64>, labels: &[usize], bins: usize) -> f64 {
        let (conf, hit) = top_label(probs, labels);
        binned_error(&conf, &hit, bins)
    }

    pub fn sce(probs: &Array2<f64>, labels: &[usize], bins: usize) -> f64 {
        let k = probs.ncols();
        (0..k)
            .map(|c| {
                let col: Vec<f64> = probs.column(c).to_vec();
                let hits: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                binned_error(&col, &hits, bins)
            })
            .sum::<f64>()
            / k as f64
    }

    /// Range membership by explicit rank counting (value, then index).
    pub fn ace(probs: &Array2<f64>, labels: &[usize], ranges: usize) -> f64 {
        let n = probs.nrows();
        let k = probs.ncols();
        let width = n / ranges;
        let mut total = 0.0;
        for c in 0..k {
            let col = probs.column(c);
            let rank = |i: usize| (0..n).filter(|&j| col[j] < col[i] || (col[j] == col[i] && j < i)).count();
            for r in 0..ranges {
                let lo = r * width;
                let hi = if r + 1 == ranges { n } else { lo + width };
                let members: Vec<usize> = (0..n).filter(|&i| (lo..hi).contains(&rank(i))).collect();
                let m = members.len() as f64;
                let acc = members.iter().filter(|&&i| labels[i] == c).count() as f64 / m;
                let conf = members.iter().map(|&i| col[i]).sum::<f64>() / m;
                total += (acc - conf).abs();
            }
        }
        total / (k * ranges) as f64
    }

    pub fn smece(probs: &Array2<f64>, labels: &[usize], bandwidth: f64) -> f64 {
        let (conf, hit) = top_label(probs, labels);
        let n = conf.len();
        let mut total = 0.0;
        for i in 0..n {
            let weights: Vec<f64> =
                (0..n).map(|j| (-(conf[i] - conf[j]).powi(2) / (2.0 * bandwidth * bandwidth)).exp()).collect();
            let norm: f64 = weights.iter().sum();
            let est: f64 = (0..n).map(|j| weights[j] / norm * if hit[j] { 1.0 } else { 0.0 }).sum();
            total += (est - conf[i]).abs();
        }
        total / n as f64
    }

    pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut score = 0.0;
        for &p in pos {
            for &q in neg {
                score += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        score / (pos.len() * neg.len()) as f64
    }

    /// Distinct scores from high to low.
    fn thresholds(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut t: Vec<f64> = a.iter().chain(b).copied().collect();
        t.sort_by(|x, y| y.total_cmp(x));
        t.dedup();
        t
    }

    fn rate(scores: &[f64], t: f64) -> f64 {
        scores.iter().filter(|&&s| s >= t).count() as f64 / scores.len() as f64
    }

    /// FPR at the highest threshold whose TPR reaches 95%.
    pub fn fpr_at_tpr95(id: &[f64], ood: &[f64]) -> f64 {
        thresholds(id, ood).into_iter().find(|&t| rate(id, t) >= 0.95).map(|t| rate(ood, t)).unwrap_or(1.0)
    }

    pub fn detection_error(id: &[f64], ood: &[f64]) -> f64 {
        let mut best: f64 = 0.5;
        for t in thresholds(id, ood) {
            best = best.min(0.5 * (1.0 - rate(id, t)) + 0.5 * rate(ood, t));
        }
        best
    }

    /// Step-wise area under precision-recall with `pos` as the positive class.
    pub fn aupr(pos: &[f64], neg: &[f64]) -> f64 {
        let mut area = 0.0;
        let mut prev_recall = 0.0;
        for t in thresholds(pos, neg) {
            let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
            let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
            let recall = tp / pos.len() as f64;
            if recall > prev_recall {
                area += (recall - prev_recall) * tp / (tp + fp);
                prev_recall = recall;
            }
        }
        area
    }
}

fn random_probabilities(rng: &mut ChaCha8Rng) -> ProbabilityBatch {
    let n = rng.random_range(20..=200usize);
    let k = rng.random_range(2..=6usize);
    // integer logits make repeated rows, exercising ties
    let coarse = rng.random_bool(0.5);
    let scale = rng.random_range(0.5..5.0);
    let logits = Array2::from_shape_simple_fn((n, k), || {
        if coarse {
            rng.random_range(0..3) as f64
        } else {
            scale * normal(rng)
        }
    });
    let probs = crate::losses::softmax_rows(&logits);
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    ProbabilityBatch::new(probs, labels).expect("softmax rows are stochastic")
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, shift: f64, coarse: bool) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let s: f64 = shift + normal(rng);
            if coarse {
                (s * 4.0).round() / 4.0
            } else {
                s
            }
        })
        .collect()
}

/// Every metric against its brute-force reference, plus the worked
/// four-sample calibration error.
pub fn metric_oracles(instances: usize, seed: u64) -> Vec<PropertyOutcome> {
    let names = [
        "oracle_ece",
        "oracle_sce",
        "oracle_ace",
        "oracle_smece",
        "oracle_auc",
        "oracle_fpr_at_tpr95",
        "oracle_detection_error",
        "oracle_aupr",
    ];
    let mut out: Vec<PropertyOutcome> = names.iter().map(|n| PropertyOutcome::errors(*n, ORACLE_TOL)).collect();
    let mut rng = stream(seed, 300);
    let gap = |a: Result<f64>, b: f64| a.map(|a| (a - b).abs()).unwrap_or(f64::NAN);

    for _ in 0..instances {
        let batch = random_probabilities(&mut rng);
        let (p, y) = (batch.probs(), batch.labels());
        let bins = rng.random_range(1..=20usize);
        let ranges = rng.random_range(1..=15usize.min(batch.len()));
        let h = rng.random_range(0.01..0.3);
        out[0].record(gap(ece(&batch, bins), oracle::ece(p, y, bins)));
        out[1].record(gap(sce(&batch, bins), oracle::sce(p, y, bins)));
        out[2].record(gap(ace(&batch, ranges), oracle::ace(p, y, ranges)));
        out[3].record(gap(smece_with(&batch, h, ExecMode::Sequential), oracle::smece(p, y, h)));

        let coarse = rng.random_bool(0.5);
        let (n_id, n_ood) = (rng.random_range(1..=150usize), rng.random_range(1..=150usize));
        let id = random_scores(&mut rng, n_id, 1.0, coarse);
        let ood = random_scores(&mut rng, n_ood, 0.0, coarse);
        let conf = batch.confidences();
        let correct = batch.correctness();
        let hits: Vec<f64> = conf.iter().zip(&correct).filter(|(_, &c)| c).map(|(&s, _)| s).collect();
        let misses: Vec<f64> = conf.iter().zip(&correct).filter(|(_, &c)| !c).map(|(&s, _)| s).collect();
        let auc_gap = if hits.is_empty() || misses.is_empty() {
            gap(rank_auc(&id, &ood), oracle::auc(&id, &ood))
        } else {
            gap(auc_refinement(&batch), oracle::auc(&hits, &misses))
                .max(gap(rank_auc(&id, &ood), oracle::auc(&id, &ood)))
        };
        out[4].record(auc_gap);
        match ood_metrics(&id, &ood) {
            Ok(r) => {
                out[5].record((r.fpr_at_tpr95 - oracle::fpr_at_tpr95(&id, &ood)).abs());
                out[6].record((r.detection_error - oracle::detection_error(&id, &ood)).abs());
                let neg_id: Vec<f64> = id.iter().map(|s| -s).collect();
                let neg_ood: Vec<f64> = ood.iter().map(|s| -s).collect();
                out[7].record(
                    (r.aupr_in - oracle::aupr(&id, &ood)).abs().max((r.aupr_out - oracle::aupr(&neg_ood, &neg_id)).abs()),
                );
            }
            Err(_) => (5..8).for_each(|i| out[i].record_failure()),
        }
    }

    let mut worked = PropertyOutcome::errors("ece_worked_example", EXACT);
    let four = ProbabilityBatch::new(
        ndarray::array![[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.6, 0.4]],
        vec![0, 0, 1, 0],
    )
    .expect("valid batch");
    worked.record(gap(ece(&four, 15), 0.35));
    out.push(worked);
    out
}
