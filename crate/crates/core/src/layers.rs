//! Parameter registration and the linear layer shared by every network.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{self as ag, Parameter, Tensor};
use crate::error::{DagError, Result};

/// Creates named parameters from a seeded generator and rejects duplicates.
pub struct ParamBuilder {
    rng: ChaCha8Rng,
    params: Vec<Parameter>,
    names: HashSet<String>,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            names: HashSet::new(),
        }
    }

    fn register(&mut self, name: String, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if !self.names.insert(name.clone()) {
            return Err(DagError::contract(format!("duplicate parameter name `{name}`")));
        }
        let t = Tensor::leaf(data, shape)?;
        self.params.push(Parameter::new(name, t.clone()));
        Ok(t)
    }

    /// Uniform(−1/√fan_in, 1/√fan_in).
    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> Result<Tensor> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        self.uniform_bound(name, shape, bound)
    }

    pub fn uniform_bound(&mut self, name: impl Into<String>, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.register(name.into(), data, shape)
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], value: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        self.register(name.into(), vec![value; n], shape)
    }

    pub fn finish(self) -> Vec<Parameter> {
        self.params
    }
}

/// `y = x·W (+ b)` applied over the last axis.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, fan_in: usize, fan_out: usize, bias: bool) -> Result<Self> {
        let weight = pb.uniform(format!("{prefix}.weight"), &[fan_in, fan_out], fan_in)?;
        let bias = if bias {
            Some(pb.uniform(format!("{prefix}.bias"), &[fan_out], fan_in)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = ag::matmul(x, &self.weight)?;
        match &self.bias {
            Some(b) => ag::add_trailing(&y, b),
            None => Ok(y),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Sets weight and bias to zero (used by tests pinning endpoint behaviour).
    pub fn zero(&self) {
        self.weight.update_data(|w| w.fill(0.0));
        if let Some(b) = &self.bias {
            b.update_data(|w| w.fill(0.0));
        }
    }
}
