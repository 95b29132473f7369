use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{DagError, Result};

/// A trainable tensor with a dotted path name, e.g. `temporal.discovery.w_q_prime`.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Parameter {
            name: name.into(),
            tensor,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Moment buffers are keyed by parameter name.
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter in `params` and clears their
    /// gradients. Fails without touching anything if a gradient is missing.
    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        if let Some(p) = params.iter().find(|p| p.tensor.grad().is_none()) {
            return Err(DagError::contract(format!("parameter `{}` has no gradient", p.name)));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for p in params {
            let g = p.tensor.grad().expect("checked above");
            let n = g.len();
            let mo = self.moments.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            if mo.m.len() != n {
                return Err(DagError::dim("adam_step", &[mo.m.len()], &[n]));
            }
            p.tensor.update_data(|theta| {
                for i in 0..n {
                    mo.m[i] = beta1 * mo.m[i] + (1.0 - beta1) * g[i];
                    mo.v[i] = beta2 * mo.v[i] + (1.0 - beta2) * g[i] * g[i];
                    let mhat = mo.m[i] / bc1;
                    let vhat = mo.v[i] / bc2;
                    theta[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            });
            p.tensor.zero_grad();
        }
        Ok(())
    }
}
