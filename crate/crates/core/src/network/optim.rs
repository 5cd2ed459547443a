use serde::{Deserialize, Serialize};

use super::{Gradients, NetworkParams};
use crate::error::{RefcalError, Result};

/// Momentum SGD state. Velocity is allocated lazily on the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum: f64,
    pub step: u64,
    #[serde(skip)]
    velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(RefcalError::ConfigInvalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(RefcalError::ConfigInvalid(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self { lr, momentum, step: 0, velocity: Vec::new() })
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }
}

/// `v ← μ v + g; θ ← θ − lr v`.
pub fn sgd_step(params: &mut NetworkParams, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    let g = grads.flatten();
    let mut theta = params.flatten();
    if g.len() != theta.len() {
        return Err(RefcalError::ShapeMismatch(format!("{} gradients for {} parameters", g.len(), theta.len())));
    }
    if state.velocity.len() != theta.len() {
        state.velocity = vec![0.0; theta.len()];
    }
    for ((t, v), gi) in theta.iter_mut().zip(state.velocity.iter_mut()).zip(&g) {
        *v = state.momentum * *v + gi;
        *t -= state.lr * *v;
    }
    state.step += 1;
    params.set_flat(&theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;

    fn setup() -> (NetworkParams, Gradients) {
        let p = NetworkParams::init(&Architecture::desk(3, 2), 5);
        let mut g = Gradients::zeros_like(&p);
        g.classifier.weight.fill(0.5);
        g.projection.bias.fill(-2.0);
        (p, g)
    }

    #[test]
    fn plain_step() {
        let (mut p, g) = setup();
        let before = p.flatten();
        let mut s = OptimizerState::new(0.1, 0.0).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        for ((a, b), gi) in p.flatten().iter().zip(&before).zip(g.flatten()) {
            assert_eq!(*a, b - 0.1 * gi);
        }
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_decays_velocity() {
        let (mut p, g) = setup();
        let mut s = OptimizerState::new(0.1, 0.9).unwrap();
        sgd_step(&mut p, &g, &mut s).unwrap();
        let v1 = s.velocity().to_vec();
        let snapshot = p.flatten();
        let zero = Gradients::zeros_like(&p);
        sgd_step(&mut p, &zero, &mut s).unwrap();
        for (v, v_prev) in s.velocity().iter().zip(&v1) {
            assert_eq!(*v, 0.9 * v_prev);
        }
        // parameters keep moving with the decayed velocity only
        for ((a, b), v) in p.flatten().iter().zip(&snapshot).zip(s.velocity()) {
            assert_eq!(*a, b - 0.1 * v);
        }
    }

    #[test]
    fn two_step_recurrence() {
        let (mut p, g1) = setup();
        let mut g2 = Gradients::zeros_like(&p);
        g2.classifier.weight.fill(-1.0);
        g2.encoder[0].bias.fill(3.0);
        let theta0 = p.flatten();
        let mut s = OptimizerState::new(0.05, 0.9).unwrap();
        sgd_step(&mut p, &g1, &mut s).unwrap();
        sgd_step(&mut p, &g2, &mut s).unwrap();
        let (a, b) = (g1.flatten(), g2.flatten());
        for i in 0..theta0.len() {
            let expected = theta0[i] - 0.05 * a[i] - 0.05 * (0.9 * a[i] + b[i]);
            assert!((p.flatten()[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(OptimizerState::new(0.0, 0.5).is_err());
        assert!(OptimizerState::new(0.1, 1.0).is_err());
    }
}
