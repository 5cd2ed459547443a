//! A small fully-connected model with manual reverse-mode gradients.
//!
//! The encoder maps inputs to a representation (ReLU on hidden layers, the
//! representation layer is linear). Two heads read the representation: a
//! projection layer followed by unit normalization, used for contrastive
//! pretraining, and a linear classifier whose logits are divided by a
//! temperature.

mod checkpoint;
mod optim;
mod temperature;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use optim::{sgd_step, OptimizerState};
pub use temperature::{fit_temperature, nll_at_temperature, TEMPERATURE_BRACKET, TEMPERATURE_TOL};

use crate::embeddings::{normalize_to_sphere, EmbeddingBatch};
use crate::error::{RefcalError, Result};

/// Affine layer `y = x Wᵀ + b` with `W` stored as (out × in).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self { weight: Array2::zeros((out_dim, in_dim)), bias: Array1::zeros(out_dim) }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-limit..limit));
        Self { weight, bias: Array1::zeros(out_dim) }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    fn scalar_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Layer sizes of a network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub representation_dim: usize,
    pub projection_dim: usize,
    pub num_classes: usize,
}

impl Architecture {
    /// Desk-scale default: `input → 64 → 32` encoder, 16-d projection.
    pub fn desk(input_dim: usize, num_classes: usize) -> Self {
        Self { input_dim, hidden: vec![64], representation_dim: 32, projection_dim: 16, num_classes }
    }
}

/// Which head an upstream gradient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Gradient with respect to the unit-normalized projection output.
    Projection,
    /// Gradient with respect to the temperature-scaled logits.
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Vec<Dense>,
    pub projection: Dense,
    pub classifier: Dense,
    pub temperature: f64,
}

/// Parameter gradients, laid out like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<Dense>,
    pub projection: Dense,
    pub classifier: Dense,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let z = |d: &Dense| Dense::zeros(d.out_dim(), d.in_dim());
        Self {
            encoder: params.encoder.iter().map(z).collect(),
            projection: z(&params.projection),
            classifier: z(&params.classifier),
        }
    }

    fn blocks(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain([&self.projection, &self.classifier])
    }

    /// Flattened in the same order as [`NetworkParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().flat_map(|b| b.values().copied()).collect()
    }
}

struct EncoderTrace {
    // input of each layer, then the representation last
    activations: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl EncoderTrace {
    fn representation(&self) -> &Array2<f64> {
        self.activations.last().expect("input is always present")
    }
}

impl NetworkParams {
    /// Seeded Glorot initialization with unit temperature.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![arch.input_dim];
        dims.extend(&arch.hidden);
        dims.push(arch.representation_dim);
        let encoder = dims.windows(2).map(|w| Dense::glorot(w[1], w[0], &mut rng)).collect();
        let projection = Dense::glorot(arch.projection_dim, arch.representation_dim, &mut rng);
        let classifier = Dense::glorot(arch.num_classes, arch.representation_dim, &mut rng);
        Self { encoder, projection, classifier, temperature: 1.0 }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.first().unwrap_or(&self.projection).in_dim()
    }

    pub fn representation_dim(&self) -> usize {
        self.projection.in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.out_dim()
    }

    /// Checks that layer shapes chain and the temperature is positive.
    pub fn validate(&self) -> Result<()> {
        let mut dim = self.input_dim();
        for (i, layer) in self.encoder.iter().enumerate() {
            if layer.in_dim() != dim || layer.bias.len() != layer.out_dim() {
                return Err(RefcalError::ShapeMismatch(format!("encoder layer {i} does not chain")));
            }
            dim = layer.out_dim();
        }
        for (name, head) in [("projection", &self.projection), ("classifier", &self.classifier)] {
            if head.in_dim() != dim || head.bias.len() != head.out_dim() {
                return Err(RefcalError::ShapeMismatch(format!("{name} head does not chain")));
            }
        }
        if !(self.temperature > 0.0) {
            return Err(RefcalError::NonPositiveTemperature(self.temperature));
        }
        Ok(())
    }

    fn blocks(&self) -> impl Iterator<Item = &Dense> {
        self.encoder.iter().chain([&self.projection, &self.classifier])
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.encoder.iter_mut().chain([&mut self.projection, &mut self.classifier])
    }

    pub fn num_scalars(&self) -> usize {
        self.blocks().map(Dense::scalar_count).sum()
    }

    /// All weights and biases: encoder layers, projection, classifier; each
    /// block's weight in row-major order followed by its bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().flat_map(|b| b.values().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_scalars() {
            return Err(RefcalError::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                self.num_scalars()
            )));
        }
        for (slot, v) in self.blocks_mut().flat_map(|b| b.values_mut()).zip(values) {
            *slot = *v;
        }
        Ok(())
    }

    /// Number of scalars belonging to the encoder (they come first in
    /// [`flatten`](Self::flatten)).
    pub fn encoder_scalars(&self) -> usize {
        self.encoder.iter().map(Dense::scalar_count).sum()
    }

    fn check_input(&self, inputs: ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(RefcalError::ShapeMismatch(format!(
                "input has {} features, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, inputs: ArrayView2<'_, f64>) -> EncoderTrace {
        let mut activations = vec![inputs.to_owned()];
        let mut pre_activations = Vec::with_capacity(self.encoder.len());
        let last = self.encoder.len().saturating_sub(1);
        for (i, layer) in self.encoder.iter().enumerate() {
            let pre = layer.apply(activations[i].view());
            let post = if i < last { pre.mapv(|v| v.max(0.0)) } else { pre.clone() };
            pre_activations.push(pre);
            activations.push(post);
        }
        EncoderTrace { activations, pre_activations }
    }

    /// Encoder output (the representation consumed by both heads).
    pub fn represent(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs)?;
        Ok(self.trace(inputs).representation().clone())
    }

    /// Unit-normalized projection-head output, one row per input.
    pub fn embed(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs)?;
        let trace = self.trace(inputs);
        normalize_to_sphere(self.projection.apply(trace.representation().view()).view())
    }

    /// Classifier logits divided by the temperature.
    pub fn logits(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(inputs)?;
        let rep = self.trace(inputs);
        Ok(self.classifier.apply(rep.representation().view()) / self.temperature)
    }

    /// Parameter gradients for an upstream gradient on one head. With
    /// `frozen_encoder` the encoder blocks are left at exactly zero.
    pub fn backward(
        &self,
        inputs: ArrayView2<'_, f64>,
        upstream: &Array2<f64>,
        head: Head,
        frozen_encoder: bool,
    ) -> Result<Gradients> {
        self.check_input(inputs)?;
        let trace = self.trace(inputs);
        let rep = trace.representation();
        let mut grads = Gradients::zeros_like(self);

        let head_layer = match head {
            Head::Projection => &self.projection,
            Head::Classifier => &self.classifier,
        };
        let expected = (inputs.nrows(), head_layer.out_dim());
        if upstream.dim() != expected {
            return Err(RefcalError::ShapeMismatch(format!(
                "upstream gradient is {:?}, expected {:?}",
                upstream.dim(),
                expected
            )));
        }

        let d_head_out = match head {
            Head::Projection => {
                let v = self.projection.apply(rep.view());
                let mut dv = Array2::zeros(v.dim());
                for ((v_row, g_row), mut dv_row) in v.rows().into_iter().zip(upstream.rows()).zip(dv.rows_mut()) {
                    let norm = v_row.dot(&v_row).sqrt();
                    let z = &v_row / norm;
                    // (I - z zᵀ) g / ‖v‖
                    let along = z.dot(&g_row);
                    dv_row.assign(&((&g_row - &(z * along)) / norm));
                }
                dv
            }
            Head::Classifier => upstream / self.temperature,
        };

        let head_grad = Dense {
            weight: d_head_out.t().dot(rep),
            bias: d_head_out.sum_axis(Axis(0)),
        };
        let d_rep = d_head_out.dot(&head_layer.weight);
        match head {
            Head::Projection => grads.projection = head_grad,
            Head::Classifier => grads.classifier = head_grad,
        }

        if !frozen_encoder {
            let last = self.encoder.len().saturating_sub(1);
            let mut d_out = d_rep;
            for i in (0..self.encoder.len()).rev() {
                let d_pre = if i < last {
                    let mask = trace.pre_activations[i].mapv(|p| if p > 0.0 { 1.0 } else { 0.0 });
                    d_out * &mask
                } else {
                    d_out
                };
                grads.encoder[i] = Dense {
                    weight: d_pre.t().dot(&trace.activations[i]),
                    bias: d_pre.sum_axis(Axis(0)),
                };
                d_out = d_pre.dot(&self.encoder[i].weight);
            }
        }
        Ok(grads)
    }
}

/// Projects inputs onto the sphere through encoder and projection head.
pub fn forward_embed(
    params: &NetworkParams,
    inputs: ArrayView2<'_, f64>,
    labels: Vec<usize>,
    num_classes: usize,
) -> Result<EmbeddingBatch> {
    EmbeddingBatch::new(params.embed(inputs)?, labels, num_classes)
}

/// Temperature-scaled classifier logits on the encoder representation.
pub fn forward_classify(params: &NetworkParams, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    params.logits(inputs)
}

pub fn backward(
    params: &NetworkParams,
    inputs: ArrayView2<'_, f64>,
    upstream: &Array2<f64>,
    head: Head,
    frozen_encoder: bool,
) -> Result<Gradients> {
    params.backward(inputs, upstream, head, frozen_encoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn identity_net() -> NetworkParams {
        NetworkParams {
            encoder: vec![],
            projection: Dense { weight: Array2::eye(2), bias: Array1::zeros(2) },
            classifier: Dense { weight: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], bias: Array1::zeros(3) },
            temperature: 1.0,
        }
    }

    #[test]
    fn identity_encoder_reduces_to_normalization() {
        let z = identity_net().embed(array![[3.0, 4.0]].view()).unwrap();
        assert_eq!(z, array![[0.6, 0.8]]);
    }

    #[test]
    fn embedding_rows_are_unit_even_for_huge_weights() {
        let mut p = NetworkParams::init(&Architecture::desk(5, 3), 7);
        for layer in p.encoder.iter_mut() {
            layer.weight *= 1e2;
        }
        p.projection.weight *= 1e2;
        let x = Array2::from_shape_fn((9, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let z = p.embed(x.view()).unwrap();
        assert_eq!(z.nrows(), 9);
        for row in z.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn temperature_halves_logits() {
        let mut p = NetworkParams::init(&Architecture::desk(4, 3), 3);
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - j as f64) * 0.3);
        let base = p.logits(x.view()).unwrap();
        p.temperature = 2.0;
        let half = p.logits(x.view()).unwrap();
        for (a, b) in base.iter().zip(half.iter()) {
            assert_eq!(a / 2.0, *b);
        }
    }

    #[test]
    fn zero_classifier_gives_zero_logits() {
        let mut p = NetworkParams::init(&Architecture::desk(4, 5), 3);
        p.classifier = Dense::zeros(5, 32);
        let logits = p.logits(Array2::ones((3, 4)).view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = NetworkParams::init(&Architecture::desk(4, 3), 1);
        assert!(matches!(p.logits(Array2::zeros((2, 3)).view()), Err(RefcalError::ShapeMismatch(_))));
        let bad_upstream = Array2::zeros((2, 2));
        assert!(matches!(
            p.backward(Array2::zeros((2, 4)).view(), &bad_upstream, Head::Classifier, false),
            Err(RefcalError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn frozen_encoder_and_zero_upstream() {
        let p = NetworkParams::init(&Architecture::desk(4, 3), 1);
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i + 2 * j) as f64 * 0.1 - 0.4);
        let up = Array2::from_elem((5, 3), 0.2);
        let g = p.backward(x.view(), &up, Head::Classifier, true).unwrap();
        assert!(g.encoder.iter().all(|d| d.weight.iter().chain(d.bias.iter()).all(|&v| v == 0.0)));
        let g = p.backward(x.view(), &Array2::zeros((5, 16)), Head::Projection, false).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_initialization() {
        let a = NetworkParams::init(&Architecture::desk(3, 2), 99);
        let b = NetworkParams::init(&Architecture::desk(3, 2), 99);
        assert_eq!(a, b);
        let x = array![[0.1, -0.4, 2.0]];
        assert_eq!(a.embed(x.view()).unwrap(), b.embed(x.view()).unwrap());
    }
}
