//! Training configuration and first-order optimizers.

use crate::geometry::LossWeights;
use crate::{Error, Result};

/// Optimizer family used by the trainers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// Plain gradient descent, optionally with heavy-ball momentum.
    Sgd { momentum: f64 },
    /// Adam with the usual bias correction.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Shared training hyperparameters. `loss_weights` applies to grasp-proposal
/// training only; `domain_samples` to reconstruction training only.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub domain_samples: usize,
    pub optimizer: OptimizerKind,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            learning_rate,
            batch_size,
            epochs,
            seed,
            loss_weights: LossWeights::default(),
            domain_samples: 512,
            optimizer: OptimizerKind::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput("learning rate must be finite and >= 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.domain_samples == 0 {
            return Err(Error::InvalidInput(
                "batch size, epochs, and domain samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Step learning-rate schedule used by the trainers: full rate for the
/// first half of the run, a quarter until 80%, a sixteenth after that.
pub fn scheduled_learning_rate(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    let progress = (epoch as f64 + 0.5) / total_epochs.max(1) as f64;
    if progress < 0.5 {
        base
    } else if progress < 0.8 {
        base / 4.0
    } else {
        base / 16.0
    }
}

/// One plain gradient-descent step: `params - lr * grad`.
pub fn sgd_step(params: &[f64], grad: &[f64], cfg: &TrainConfig) -> Result<Vec<f64>> {
    if params.len() != grad.len() {
        return Err(Error::ShapeMismatch {
            expected: params.len(),
            found: grad.len(),
        });
    }
    Ok(params
        .iter()
        .zip(grad)
        .map(|(p, g)| p - cfg.learning_rate * g)
        .collect())
}

/// Stateful optimizer matching [`OptimizerKind`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    velocity: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        Self {
            kind,
            velocity: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step_count: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() || grad.len() != self.velocity.len() {
            return Err(Error::ShapeMismatch {
                expected: self.velocity.len(),
                found: grad.len(),
            });
        }
        self.step_count += 1;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for i in 0..params.len() {
                    self.velocity[i] = momentum * self.velocity[i] - lr * grad[i];
                    params[i] += self.velocity[i];
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.step_count as f64;
                let c1 = 1.0 - beta1.powf(t);
                let c2 = 1.0 - beta2.powf(t);
                for i in 0..params.len() {
                    self.velocity[i] = beta1 * self.velocity[i] + (1.0 - beta1) * grad[i];
                    self.second_moment[i] =
                        beta2 * self.second_moment[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.velocity[i] / c1;
                    let v_hat = self.second_moment[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}
