//! Brute-force references written from the definitions, sharing no code with
//! the library beyond its public data types.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use refcal::network::NetworkParams;

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn normalize_rows(v: &Array2<f64>) -> Array2<f64> {
    let mut out = v.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row /= norm;
    }
    out
}

/// Labels over `k` classes with every class used at least twice.
pub fn labels_with_pairs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..2 * k).map(|i| i / 2).collect();
    labels.extend((2 * k..n).map(|_| rng.random_range(0..k)));
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    labels
}

// --- embedding losses --------------------------------------------------------

/// Sum over anchors of `-1/|P| Σ_p log(exp(z_i·z_p/τ) / Σ_{a≠i} exp(z_i·z_a/τ))`.
pub fn supcon(z: &Array2<f64>, labels: &[usize], tau: f64) -> f64 {
    let n = z.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let sim = |a: usize| z.row(i).dot(&z.row(a)) / tau;
        let denom: f64 = (0..n).filter(|&a| a != i).map(|a| sim(a).exp()).sum();
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        let inner: f64 = positives.iter().map(|&p| (sim(p).exp() / denom).ln()).sum();
        total -= inner / positives.len() as f64;
    }
    total
}

/// Sum over anchors of nearest-positive minus nearest-negative half squared
/// distance.
pub fn refinement(z: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = z.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let mut pos = f64::INFINITY;
        let mut neg = f64::INFINITY;
        for j in (0..n).filter(|&j| j != i) {
            let diff = &z.row(i) - &z.row(j);
            let d = 0.5 * diff.dot(&diff);
            if labels[j] == labels[i] {
                pos = pos.min(d);
            } else {
                neg = neg.min(d);
            }
        }
        total += pos - neg;
    }
    total
}

// --- classifier losses -------------------------------------------------------

pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

pub fn nll(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let p = softmax(logits);
    labels.iter().enumerate().map(|(i, &y)| -p[[i, y]].ln()).sum::<f64>() / labels.len() as f64
}

pub fn label_smoothing(logits: &Array2<f64>, labels: &[usize], epsilon: f64) -> f64 {
    let p = softmax(logits);
    let k = logits.ncols();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        for c in 0..k {
            let target = if c == y { 1.0 - epsilon } else { epsilon / (k - 1) as f64 };
            total -= target * p[[i, c]].ln();
        }
    }
    total / labels.len() as f64
}

pub fn focal(logits: &Array2<f64>, labels: &[usize], gamma: f64) -> f64 {
    let p = softmax(logits);
    labels.iter().enumerate().map(|(i, &y)| -(1.0 - p[[i, y]]).powf(gamma) * p[[i, y]].ln()).sum::<f64>()
        / labels.len() as f64
}

// --- network forward ---------------------------------------------------------

/// Encoder output: ReLU after every encoder layer except the last.
pub fn representation(params: &NetworkParams, x: &Array2<f64>) -> Array2<f64> {
    let mut a = x.clone();
    let last = params.encoder.len().saturating_sub(1);
    for (i, layer) in params.encoder.iter().enumerate() {
        let mut pre = a.dot(&layer.weight.t()) + &layer.bias;
        if i < last {
            pre.mapv_inplace(|v| v.max(0.0));
        }
        a = pre;
    }
    a
}

pub fn embed(params: &NetworkParams, x: &Array2<f64>) -> Array2<f64> {
    let r = representation(params, x);
    normalize_rows(&(r.dot(&params.projection.weight.t()) + &params.projection.bias))
}

pub fn logits(params: &NetworkParams, x: &Array2<f64>) -> Array2<f64> {
    let r = representation(params, x);
    (r.dot(&params.classifier.weight.t()) + &params.classifier.bias) / params.temperature
}

/// Smallest absolute hidden pre-activation (distance to a ReLU kink).
pub fn kink_distance(params: &NetworkParams, x: &Array2<f64>) -> f64 {
    let mut a = x.clone();
    let mut closest = f64::INFINITY;
    let hidden = params.encoder.len().saturating_sub(1);
    for layer in &params.encoder[..hidden] {
        let pre = a.dot(&layer.weight.t()) + &layer.bias;
        closest = pre.iter().fold(closest, |m, v| m.min(v.abs()));
        a = pre.mapv(|v| v.max(0.0));
    }
    closest
}

// --- finite differences ------------------------------------------------------

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a| + |n|, 1e-4)`, maximized over coordinates.
pub fn max_relative_error(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-4);
        if err.is_nan() {
            return f64::NAN;
        }
        worst = worst.max(err);
    }
    worst
}

// --- metrics -----------------------------------------------------------------

/// Top-label confidence and correctness, first maximum on ties.
pub fn top_label(probs: &Array2<f64>, labels: &[usize]) -> (Vec<f64>, Vec<bool>) {
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

/// Bins are `(b/M, (b+1)/M]`, with 0 placed in the first bin.
fn binned_gap(values: &[f64], hits: &[bool], bins: usize) -> f64 {
    let n = values.len() as f64;
    let m = bins as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let (lo, hi) = (b as f64 / m, (b + 1) as f64 / m);
        let members: Vec<usize> =
            (0..values.len()).filter(|&i| (values[i] > lo || (b == 0 && values[i] == 0.0)) && values[i] <= hi).collect();
        if members.is_empty() {
            continue;
        }
        let count = members.len() as f64;
        let acc = members.iter().filter(|&&i| hits[i]).count() as f64 / count;
        let conf = members.iter().map(|&i| values[i]).sum::<f64>() / count;
        total += count / n * (acc - conf).abs();
    }
    total
}

pub fn ece(probs: &Array2<f64>, labels: &[usize], bins: usize) -> f64 {
    let (conf, hit) = top_label(probs, labels);
    binned_gap(&conf, &hit, bins)
}

pub fn sce(probs: &Array2<f64>, labels: &[usize], bins: usize) -> f64 {
    let k = probs.ncols();
    let mut total = 0.0;
    for c in 0..k {
        let hits: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        total += binned_gap(&probs.column(c).to_vec(), &hits, bins);
    }
    total / k as f64
}

/// Ranges hold `floor(N/R)` samples by rank (value, then index); the last
/// range takes the remainder.
pub fn ace(probs: &Array2<f64>, labels: &[usize], ranges: usize) -> f64 {
    let (n, k) = probs.dim();
    let width = n / ranges;
    let mut total = 0.0;
    for c in 0..k {
        let col = probs.column(c);
        let rank = |i: usize| (0..n).filter(|&j| col[j] < col[i] || (col[j] == col[i] && j < i)).count();
        for r in 0..ranges {
            let lo = r * width;
            let hi = if r + 1 == ranges { n } else { lo + width };
            let members: Vec<usize> = (0..n).filter(|&i| rank(i) >= lo && rank(i) < hi).collect();
            let count = members.len() as f64;
            let acc = members.iter().filter(|&&i| labels[i] == c).count() as f64 / count;
            let conf = members.iter().map(|&i| col[i]).sum::<f64>() / count;
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
        let mut weights = 0.0;
        let mut acc = 0.0;
        for j in 0..n {
            let w = (-(conf[i] - conf[j]).powi(2) / (2.0 * bandwidth * bandwidth)).exp();
            weights += w;
            acc += w * if hit[j] { 1.0 } else { 0.0 };
        }
        total += (acc / weights - conf[i]).abs();
    }
    total / n as f64
}

/// Fraction of (positive, negative) pairs ordered correctly, ties as one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut score = 0.0;
    for &p in pos {
        for &q in neg {
            if p > q {
                score += 1.0;
            } else if p == q {
                score += 0.5;
            }
        }
    }
    score / (pos.len() * neg.len()) as f64
}

pub fn refinement_auc(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let (conf, hit) = top_label(probs, labels);
    let pos: Vec<f64> = (0..conf.len()).filter(|&i| hit[i]).map(|i| conf[i]).collect();
    let neg: Vec<f64> = (0..conf.len()).filter(|&i| !hit[i]).map(|i| conf[i]).collect();
    auc(&pos, &neg)
}

fn thresholds(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = a.iter().chain(b).copied().collect();
    t.sort_by(|x, y| y.total_cmp(x));
    t.dedup();
    t
}

fn accept_rate(scores: &[f64], t: f64) -> f64 {
    scores.iter().filter(|&&s| s >= t).count() as f64 / scores.len() as f64
}

/// FPR at the strictest threshold reaching 95% TPR.
pub fn fpr_at_tpr95(id: &[f64], ood: &[f64]) -> f64 {
    for t in thresholds(id, ood) {
        if accept_rate(id, t) >= 0.95 {
            return accept_rate(ood, t);
        }
    }
    1.0
}

/// Minimum over thresholds (and the empty acceptance set) of the mean of the
/// two error rates.
pub fn detection_error(id: &[f64], ood: &[f64]) -> f64 {
    let mut best: f64 = 0.5;
    for t in thresholds(id, ood) {
        best = best.min(0.5 * (1.0 - accept_rate(id, t)) + 0.5 * accept_rate(ood, t));
    }
    best
}

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

/// Accuracy of ten confidence-sorted groups of near-equal size.
pub fn decile_accuracy(conf: &[f64], hit: &[bool]) -> Vec<f64> {
    let n = conf.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| conf[a].total_cmp(&conf[b]).then(a.cmp(&b)));
    (0..10)
        .filter_map(|d| {
            let group = &order[d * n / 10..(d + 1) * n / 10];
            (!group.is_empty()).then(|| group.iter().filter(|&&i| hit[i]).count() as f64 / group.len() as f64)
        })
        .collect()
}

pub fn distinct(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
