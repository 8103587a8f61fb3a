//! First-order optimizers that consume an arbitrary update direction in
//! place of the raw gradient.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    Sgd {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { lr: default_lr(), beta1: default_beta1(), beta2: default_beta2(), eps: default_adam_eps() }
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam { lr, beta1: default_beta1(), beta2: default_beta2(), eps: default_adam_eps() }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Sgd { lr, .. } => *lr,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        match *self {
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                if !(lr >= 0.0) || !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                    return Err("adam needs lr >= 0, betas in [0, 1) and eps > 0");
                }
            }
            OptimizerConfig::Sgd { lr, momentum } => {
                if !(lr >= 0.0) || !(0.0..1.0).contains(&momentum) {
                    return Err("sgd needs lr >= 0 and momentum in [0, 1)");
                }
            }
        }
        Ok(())
    }
}

/// Optimizer state; serializable so runs can resume from checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub step: u64,
    /// First moment (Adam) or velocity (SGD).
    pub m: Vec<f64>,
    /// Second moment (Adam only).
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n: usize) -> Self {
        let v = if matches!(config, OptimizerConfig::Adam { .. }) { vec![0.0; n] } else { Vec::new() };
        Self { config, step: 0, m: vec![0.0; n], v }
    }

    /// `params -= update(direction)`.
    pub fn step(&mut self, params: &mut [f64], direction: &[f64]) {
        assert_eq!(params.len(), direction.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        match self.config {
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let t = self.step as f64;
                let c1 = 1.0 - math::powf(beta1, t);
                let c2 = 1.0 - math::powf(beta2, t);
                for i in 0..params.len() {
                    let g = direction[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
                }
            }
            OptimizerConfig::Sgd { lr, momentum } => {
                for i in 0..params.len() {
                    self.m[i] = momentum * self.m[i] + direction[i];
                    params[i] -= lr * self.m[i];
                }
            }
        }
    }
}
