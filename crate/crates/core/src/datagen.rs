//! Seeded synthetic datasets: long-tailed Gaussian blobs, binary regrouping,
//! Gaussian-noise corruption of the test split, and far-away OOD samples.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{RefcalError, Result};

pub const TRAIN_FRACTION: f64 = 0.70;
pub const VAL_FRACTION: f64 = 0.15;
/// Noise standard deviation per severity step, in units of the clean
/// training-split feature std.
pub const SEVERITY_STEP: f64 = 0.2;
/// OOD center distance in units of the largest class-center norm.
pub const OOD_DISPLACEMENT: f64 = 3.0;

/// Below this fraction of the largest center norm the centroid is treated as
/// the origin.
const CENTROID_MIN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_classes: usize,
    /// Unknown for datasets read back from a file.
    pub imbalance_factor: Option<f64>,
    pub seed: Option<u64>,
    /// 0 for clean data.
    pub corruption_severity: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    pub meta: DatasetMeta,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.meta.num_classes
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    /// Features and labels of one split, in dataset order.
    pub fn subset(&self, split: Split) -> (Array2<f64>, Vec<usize>) {
        let idx = self.indices(split);
        let x = self.features.select(Axis(0), &idx);
        let y = idx.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    /// Per-class sample counts, optionally restricted to a split.
    pub fn class_counts(&self, split: Option<Split>) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for i in 0..self.len() {
            if split.is_none_or(|s| self.split[i] == s) {
                counts[self.labels[i]] += 1;
            }
        }
        counts
    }
}

/// Parameters of the long-tailed blob generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub num_classes: usize,
    pub n_max: usize,
    pub dims: usize,
    pub imbalance_factor: f64,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl BlobConfig {
    /// The default desk scenario: 4 classes, imbalance 0.1, 8 features.
    pub fn desk(seed: u64) -> Self {
        Self {
            num_classes: 4,
            n_max: 1000,
            dims: 8,
            imbalance_factor: 0.1,
            class_separation: 4.0,
            noise_sigma: 1.0,
            seed,
        }
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// `round(n_max · ρ^(k/(K−1)))`, at least 2 per class.
pub fn class_counts(num_classes: usize, n_max: usize, imbalance_factor: f64) -> Vec<usize> {
    (0..num_classes)
        .map(|k| {
            let exponent = if num_classes > 1 { k as f64 / (num_classes - 1) as f64 } else { 0.0 };
            round_half_up(n_max as f64 * imbalance_factor.powf(exponent)).max(2)
        })
        .collect()
}

/// (train, val, test) sizes for a class of `n` samples. Train keeps at least
/// two samples; val and test get one each once `n >= 4`.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let mut val = round_half_up(n as f64 * VAL_FRACTION);
    let mut test = round_half_up(n as f64 * (1.0 - TRAIN_FRACTION - VAL_FRACTION));
    while n < val + test + 2 && test > 0 {
        test -= 1;
    }
    while n < val + test + 2 && val > 0 {
        val -= 1;
    }
    (n - val - test, val, test)
}

/// Class centers with pairwise distance at least `separation`.
pub fn class_centers(num_classes: usize, dims: usize, separation: f64) -> Array2<f64> {
    let mut centers = Array2::zeros((num_classes, dims));
    if dims == 1 {
        let offset = (num_classes - 1) as f64 / 2.0;
        for k in 0..num_classes {
            centers[[k, 0]] = (k as f64 - offset) * separation;
        }
    } else if dims > 2 && dims >= num_classes {
        let scale = separation / 2f64.sqrt();
        for k in 0..num_classes {
            centers[[k, k]] = scale;
        }
    } else {
        let radius = separation / (2.0 * (std::f64::consts::PI / num_classes as f64).sin());
        for k in 0..num_classes {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / num_classes as f64;
            centers[[k, 0]] = radius * angle.cos();
            centers[[k, 1]] = radius * angle.sin();
        }
    }
    centers
}

pub fn generate_blobs(config: &BlobConfig) -> Result<SyntheticDataset> {
    let k = config.num_classes;
    if !(config.imbalance_factor > 0.0 && config.imbalance_factor <= 1.0) {
        return Err(RefcalError::InvalidImbalance(config.imbalance_factor));
    }
    if k < 2 || config.n_max < 2 * k {
        return Err(RefcalError::TooFewSamples { needed: 2 * k.max(2), have: config.n_max });
    }
    if config.dims == 0 || !(config.noise_sigma >= 0.0) || !(config.class_separation > 0.0) {
        return Err(RefcalError::ConfigInvalid("dims, noise and separation must be positive".into()));
    }
    let counts = class_counts(k, config.n_max, config.imbalance_factor);
    let centers = class_centers(k, config.dims, config.class_separation);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let total: usize = counts.iter().sum();
    let mut rows = Vec::with_capacity(total * config.dims);
    let mut labels = Vec::with_capacity(total);
    let mut split = Vec::with_capacity(total);
    for (class, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            for j in 0..config.dims {
                let z: f64 = StandardNormal.sample(&mut rng);
                rows.push(centers[[class, j]] + config.noise_sigma * z);
            }
            labels.push(class);
        }
        let (train, val, test) = split_sizes(n);
        let mut tags: Vec<Split> = std::iter::repeat_n(Split::Train, train)
            .chain(std::iter::repeat_n(Split::Val, val))
            .chain(std::iter::repeat_n(Split::Test, test))
            .collect();
        tags.shuffle(&mut rng);
        split.extend(tags);
    }
    let features = Array2::from_shape_vec((total, config.dims), rows).expect("row count");

    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    Ok(SyntheticDataset {
        features: features.select(Axis(0), &order),
        labels: order.iter().map(|&i| labels[i]).collect(),
        split: order.iter().map(|&i| split[i]).collect(),
        meta: DatasetMeta {
            num_classes: k,
            imbalance_factor: Some(config.imbalance_factor),
            seed: Some(config.seed),
            corruption_severity: 0,
        },
    })
}

/// Relabels classes into two groups; features are untouched.
pub fn binary_group(dataset: &SyntheticDataset, class_to_group: &BTreeMap<usize, usize>) -> Result<SyntheticDataset> {
    for class in 0..dataset.num_classes() {
        match class_to_group.get(&class) {
            None => return Err(RefcalError::IncompleteMap(class)),
            Some(&g) if g > 1 => {
                return Err(RefcalError::ConfigInvalid(format!("class {class} mapped to group {g}, expected 0 or 1")))
            }
            _ => {}
        }
    }
    for group in 0..2 {
        if !class_to_group.values().any(|&g| g == group) {
            return Err(RefcalError::EmptyGroup(group));
        }
    }
    let mut out = dataset.clone();
    out.labels = dataset.labels.iter().map(|l| class_to_group[l]).collect();
    out.meta.num_classes = 2;
    Ok(out)
}

/// Population standard deviation of every feature over the training split.
pub fn train_feature_std(dataset: &SyntheticDataset) -> Array1<f64> {
    let (x, _) = dataset.subset(Split::Train);
    x.std_axis(Axis(0), 0.0)
}

/// Adds Gaussian noise with per-feature sigma `severity · 0.2 · std` to the
/// test split only.
pub fn corrupt(dataset: &SyntheticDataset, severity: u8, seed: u64) -> Result<SyntheticDataset> {
    if !(1..=5).contains(&severity) {
        return Err(RefcalError::SeverityOutOfRange(severity));
    }
    let sigma = train_feature_std(dataset) * (severity as f64 * SEVERITY_STEP);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for i in dataset.indices(Split::Test) {
        for (j, s) in sigma.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            out.features[[i, j]] += s * z;
        }
    }
    out.meta.corruption_severity = severity;
    Ok(out)
}

/// Per-class feature means over the training split.
pub fn empirical_centers(dataset: &SyntheticDataset) -> Array2<f64> {
    let (x, y) = dataset.subset(Split::Train);
    let k = dataset.num_classes();
    let mut sums = Array2::zeros((k, dataset.dim()));
    let mut counts = vec![0usize; k];
    for (row, &label) in x.rows().into_iter().zip(&y) {
        let mut target = sums.row_mut(label);
        target += &row;
        counts[label] += 1;
    }
    for (mut row, &c) in sums.rows_mut().into_iter().zip(&counts) {
        if c > 0 {
            row /= c as f64;
        }
    }
    sums
}

/// Center of the OOD cluster: `3 · max‖center‖` along the outward centroid
/// direction, so the cluster sits beyond all classes at once. Falls back to a
/// direction orthogonal to every class center, then to the first axis, when
/// the centroid is too close to the origin to define a direction.
pub fn ood_center(dataset: &SyntheticDataset) -> Array1<f64> {
    let centers = empirical_centers(dataset);
    let d = dataset.dim();
    let max_norm = centers.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
    let centroid = centers.mean_axis(Axis(0)).expect("at least one class");
    let centroid_norm = centroid.dot(&centroid).sqrt();
    let direction = if centroid_norm > CENTROID_MIN_FRACTION * max_norm {
        centroid / centroid_norm
    } else {
        orthogonal_direction(&centers, max_norm).unwrap_or_else(|| {
            let mut e = Array1::zeros(d);
            e[0] = 1.0;
            e
        })
    };
    direction * (OOD_DISPLACEMENT * max_norm)
}

/// Unit axis with the largest component outside the span of the centers.
fn orthogonal_direction(centers: &Array2<f64>, max_norm: f64) -> Option<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::new();
    for c in centers.rows() {
        let mut v = c.to_owned();
        for b in &basis {
            v = &v - &(b * b.dot(&v));
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 * max_norm.max(1.0) {
            basis.push(v / norm);
        }
    }
    let mut best: Option<(f64, Array1<f64>)> = None;
    for j in 0..centers.ncols() {
        let mut v = Array1::zeros(centers.ncols());
        v[j] = 1.0;
        for b in &basis {
            v = &v - &(b * b.dot(&v));
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 && best.as_ref().is_none_or(|(n, _)| norm > *n + 1e-12) {
            best = Some((norm, v / norm));
        }
    }
    best.map(|(_, u)| u)
}

/// Pooled within-class standard deviation of the training split.
pub fn within_class_sigma(dataset: &SyntheticDataset) -> f64 {
    let centers = empirical_centers(dataset);
    let (x, y) = dataset.subset(Split::Train);
    let mut sum = 0.0;
    for (row, &label) in x.rows().into_iter().zip(&y) {
        let diff = &row - &centers.row(label);
        sum += diff.dot(&diff);
    }
    (sum / (x.len().max(1)) as f64).sqrt()
}

/// Samples from an isotropic Gaussian placed outside the class-center hull.
pub fn generate_ood(dataset: &SyntheticDataset, n_ood: usize, seed: u64) -> Array2<f64> {
    let center = ood_center(dataset);
    let sigma = within_class_sigma(dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n_ood, dataset.dim()), |(_, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        center[j] + sigma * z
    })
}

const DATASET_MAGIC: &str = "# refcal-dataset v1";

/// Text encoding: a header line, then `split,label,f_0,...` per sample with
/// 17 significant digits.
pub fn write_dataset(dataset: &SyntheticDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{DATASET_MAGIC} K={} d={} N={}", dataset.num_classes(), dataset.dim(), dataset.len());
    for i in 0..dataset.len() {
        out.push_str(dataset.split[i].as_str());
        let _ = write!(out, ",{}", dataset.labels[i]);
        for v in dataset.features.row(i) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

fn header_field(header: &str, key: &str) -> Result<usize> {
    header
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| RefcalError::Parse { line: 1, message: format!("missing or invalid {key}= in header") })
}

pub fn read_dataset(text: &str) -> Result<SyntheticDataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(RefcalError::Parse { line: 1, message: "empty file".into() })?;
    if !header.starts_with(DATASET_MAGIC) {
        return Err(RefcalError::Parse { line: 1, message: "not a refcal dataset v1 file".into() });
    }
    let k = header_field(header, "K")?;
    let d = header_field(header, "d")?;
    let n = header_field(header, "N")?;
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut split = Vec::with_capacity(n);
    for (offset, line) in lines.enumerate() {
        let line_no = offset + 2;
        let err = |message: String| RefcalError::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(err(format!("expected {} fields, found {}", d + 2, fields.len())));
        }
        split.push(fields[0].parse::<Split>().map_err(err)?);
        let label: usize = fields[1].parse().map_err(|_| err(format!("bad label `{}`", fields[1])))?;
        if label >= k {
            return Err(err(format!("label {label} out of range for K={k}")));
        }
        labels.push(label);
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| err(format!("bad number `{f}`")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite feature `{f}`")));
            }
            features.push(v);
        }
    }
    if labels.len() != n {
        return Err(RefcalError::Parse {
            line: labels.len() + 2,
            message: format!("header declares N={n}, found {} rows", labels.len()),
        });
    }
    Ok(SyntheticDataset {
        features: Array2::from_shape_vec((n, d), features).expect("checked field counts"),
        labels,
        split,
        meta: DatasetMeta { num_classes: k, imbalance_factor: None, seed: None, corruption_severity: 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_tail_counts() {
        assert_eq!(
            class_counts(10, 1000, 0.1),
            vec![1000, 774, 599, 464, 359, 278, 215, 167, 129, 100]
        );
        assert_eq!(class_counts(4, 500, 0.1), vec![500, 232, 108, 50]);
        assert_eq!(class_counts(5, 300, 1.0), vec![300; 5]);
        assert_eq!(class_counts(3, 10, 0.001), vec![10, 2, 2]);
    }

    #[test]
    fn split_sizes_keep_two_train_samples() {
        assert_eq!(split_sizes(2), (2, 0, 0));
        assert_eq!(split_sizes(3), (3, 0, 0));
        assert_eq!(split_sizes(4), (2, 1, 1));
        assert_eq!(split_sizes(100), (70, 15, 15));
        for n in 2..200 {
            let (tr, va, te) = split_sizes(n);
            assert_eq!(tr + va + te, n);
            assert!(tr >= 2);
        }
    }

    #[test]
    fn centers_are_separated() {
        for (k, d) in [(4, 2), (4, 8), (6, 3), (3, 1), (2, 2)] {
            let c = class_centers(k, d, 4.0);
            for a in 0..k {
                for b in a + 1..k {
                    let diff = &c.row(a) - &c.row(b);
                    assert!(diff.dot(&diff).sqrt() >= 4.0 - 1e-9, "k={k} d={d}");
                }
            }
        }
    }

    #[test]
    fn generator_validates_and_is_deterministic() {
        let mut cfg = BlobConfig::desk(3);
        cfg.n_max = 200;
        let a = generate_blobs(&cfg).unwrap();
        let b = generate_blobs(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(None), class_counts(4, 200, 0.1));
        for c in a.class_counts(Some(Split::Train)) {
            assert!(c >= 2);
        }
        assert!(a.class_counts(Some(Split::Test)).iter().all(|&c| c > 0));

        cfg.imbalance_factor = 1.5;
        assert!(matches!(generate_blobs(&cfg), Err(RefcalError::InvalidImbalance(_))));
        cfg.imbalance_factor = 0.0;
        assert!(matches!(generate_blobs(&cfg), Err(RefcalError::InvalidImbalance(_))));
        cfg.imbalance_factor = 0.5;
        cfg.n_max = 7;
        assert!(matches!(generate_blobs(&cfg), Err(RefcalError::TooFewSamples { .. })));
    }

    #[test]
    fn binary_grouping() {
        let mut cfg = BlobConfig::desk(5);
        cfg.n_max = 100;
        let ds = generate_blobs(&cfg).unwrap();
        let map: BTreeMap<usize, usize> = [(0, 0), (1, 0), (2, 1), (3, 1)].into();
        let bin = binary_group(&ds, &map).unwrap();
        let c = ds.class_counts(None);
        assert_eq!(bin.class_counts(None), vec![c[0] + c[1], c[2] + c[3]]);
        assert_eq!(bin.features, ds.features);

        let missing: BTreeMap<usize, usize> = [(0, 0), (1, 0), (2, 1)].into();
        assert!(matches!(binary_group(&ds, &missing), Err(RefcalError::IncompleteMap(3))));
        let one_sided: BTreeMap<usize, usize> = [(0, 0), (1, 0), (2, 0), (3, 0)].into();
        assert!(matches!(binary_group(&ds, &one_sided), Err(RefcalError::EmptyGroup(1))));

        let mut cfg2 = cfg.clone();
        cfg2.num_classes = 2;
        let two = generate_blobs(&cfg2).unwrap();
        let identity: BTreeMap<usize, usize> = [(0, 0), (1, 1)].into();
        assert_eq!(binary_group(&two, &identity).unwrap(), two);
    }

    #[test]
    fn corruption_touches_only_test_rows() {
        let mut cfg = BlobConfig::desk(8);
        cfg.n_max = 120;
        let ds = generate_blobs(&cfg).unwrap();
        let c1 = corrupt(&ds, 1, 42).unwrap();
        let c5 = corrupt(&ds, 5, 42).unwrap();
        assert_eq!(c5.meta.corruption_severity, 5);
        assert_eq!(corrupt(&ds, 5, 42).unwrap(), c5);
        for i in 0..ds.len() {
            let d1 = &c1.features.row(i) - &ds.features.row(i);
            let d5 = &c5.features.row(i) - &ds.features.row(i);
            if ds.split[i] == Split::Test {
                // same seed, same normals: noise scales linearly with severity
                for (a, b) in d1.iter().zip(d5.iter()) {
                    assert!((5.0 * a - b).abs() < 1e-12);
                }
            } else {
                assert!(d5.iter().all(|&v| v == 0.0));
            }
        }
        assert!(matches!(corrupt(&ds, 6, 1), Err(RefcalError::SeverityOutOfRange(6))));
        assert!(matches!(corrupt(&ds, 0, 1), Err(RefcalError::SeverityOutOfRange(0))));
    }

    #[test]
    fn ood_center_is_far_away() {
        for dims in [2, 3, 8] {
            let mut cfg = BlobConfig::desk(9);
            cfg.dims = dims;
            cfg.n_max = 200;
            let ds = generate_blobs(&cfg).unwrap();
            let centers = empirical_centers(&ds);
            let max_norm = centers.rows().into_iter().map(|r| r.dot(&r).sqrt()).fold(0.0, f64::max);
            let c = ood_center(&ds);
            assert!(c.dot(&c).sqrt() >= 3.0 * max_norm - 1e-9);
            let x = generate_ood(&ds, 50, 4);
            assert_eq!(x.dim(), (50, dims));
            assert_eq!(x, generate_ood(&ds, 50, 4));
        }
    }

    #[test]
    fn text_format_round_trips() {
        let mut cfg = BlobConfig::desk(12);
        cfg.n_max = 60;
        let ds = generate_blobs(&cfg).unwrap();
        let text = write_dataset(&ds);
        assert!(text.starts_with("# refcal-dataset v1 K=4 d=8 N="));
        let back = read_dataset(&text).unwrap();
        assert_eq!(back.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   ds.features.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.split, ds.split);
        assert_eq!(write_dataset(&back), text);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "# refcal-dataset v1 K=2 d=2 N=2\ntrain,0,1.0,2.0\ntrain,5,1.0,2.0\n";
        assert!(matches!(read_dataset(text), Err(RefcalError::Parse { line: 3, .. })));
        let short = "# refcal-dataset v1 K=2 d=2 N=3\ntrain,0,1.0,2.0\n";
        assert!(matches!(read_dataset(short), Err(RefcalError::Parse { .. })));
    }
}
