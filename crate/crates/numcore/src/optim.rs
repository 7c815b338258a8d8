//! Adam optimizer with bias correction.

use crate::error::{NumError, Result};
use crate::tensor::{Real, Tensor};

/// Hyperparameters for one Adam instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    /// beta1 = 0.5 keeps the first-moment memory short, which stabilizes
    /// adversarial training where the gradient field shifts every step.
    pub fn gan(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn standard(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-parameter moment estimates plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<E: Real> {
    config: AdamConfig,
    /// First-moment (mean) estimate per parameter.
    pub m1: Vec<Tensor<E>>,
    /// Second-moment (uncentered variance) estimate per parameter.
    pub m2: Vec<Tensor<E>>,
    pub step_count: u64,
}

impl<E: Real> AdamState<E> {
    pub fn new(config: AdamConfig, param_shapes: &[&[usize]]) -> Self {
        AdamState {
            config,
            m1: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            m2: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step_count: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// Apply one update in place. `params` and `grads` must be index-aligned
    /// with the state. Moments accumulate in f64 regardless of `E`.
    pub fn step(&mut self, params: &mut [&mut Tensor<E>], grads: &[&Tensor<E>]) -> Result<()> {
        if params.len() != self.m1.len() || grads.len() != self.m1.len() {
            return Err(NumError::OptimizerArity {
                state: self.m1.len(),
                given: params.len().max(grads.len()),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for ((param, grad), (m1, m2)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m1.iter_mut().zip(self.m2.iter_mut()))
        {
            if param.shape() != grad.shape() {
                return Err(NumError::ShapeMismatch {
                    context: "AdamState::step",
                    expected: param.shape().to_vec(),
                    got: grad.shape().to_vec(),
                });
            }
            let pd = param.data_mut();
            let gd = grad.data();
            let m1d = m1.data_mut();
            let m2d = m2.data_mut();
            for i in 0..pd.len() {
                let g = gd[i].to64();
                let m = beta1 * m1d[i].to64() + (1.0 - beta1) * g;
                let v = beta2 * m2d[i].to64() + (1.0 - beta2) * g * g;
                m1d[i] = E::from_f64(m);
                m2d[i] = E::from_f64(v);
                let update = learning_rate * (m / bc1) / ((v / bc2).sqrt() + epsilon);
                pd[i] = E::from_f64(pd[i].to64() - update);
            }
        }
        Ok(())
    }
}
