//! MLP fusion baseline: a linear backbone over the flattened history whose
//! representation is concatenated with the flattened future exogenous values
//! and mapped to the forecast by an MLP.

use crate::attention::Mlp;
use crate::autograd::{self as ag, no_grad, Parameter, Tensor};
use crate::data::Batch;
use crate::error::{DagError, Result};
use crate::layers::{Linear, ParamBuilder};
use crate::model::{denormalize, normalize_batch, DagConfig};

use super::{Forecaster, StepLosses};

pub struct MlpFusion {
    pub n_endo: usize,
    pub n_exo: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub normalize: bool,
    /// `[(N+D)·T] → hidden`
    pub backbone: Linear,
    /// `[hidden + D·F] → N·F`
    pub head: Mlp,
    params: Vec<Parameter>,
}

impl MlpFusion {
    /// Sizes come from a model config: `d_model` for the backbone width and
    /// `ff_hidden` for the head's hidden layer.
    pub fn new(cfg: &DagConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, d, t, f) = (cfg.n_endo, cfg.n_exo, cfg.lookback, cfg.horizon);
        let mut pb = ParamBuilder::new(cfg.seed);
        let backbone = Linear::new(&mut pb, "baseline.backbone", (n + d) * t, cfg.d_model, true)?;
        let head = Mlp::new(&mut pb, "baseline.head", cfg.d_model + d * f, cfg.ff_hidden, n * f)?;
        Ok(MlpFusion {
            n_endo: n,
            n_exo: d,
            lookback: t,
            horizon: f,
            normalize: cfg.normalize,
            backbone,
            head,
            params: pb.finish(),
        })
    }

    /// `[B × N × F]` forecast in the original scale.
    pub fn forward(&self, batch: &Batch) -> Result<Tensor> {
        let want = [self.n_endo, self.n_exo, self.lookback, self.horizon];
        let got = [batch.n_endo, batch.n_exo, batch.lookback, batch.horizon];
        if want != got {
            return Err(DagError::dim("mlp_fusion", &want, &got));
        }
        let b = batch.size;
        let z = normalize_batch(batch, self.normalize)?;
        let y_exo = z
            .y_exo
            .as_ref()
            .ok_or_else(|| DagError::contract("the fusion head needs future exogenous values"))?;
        let history = ag::concat(
            &[
                ag::reshape(&z.x_endo, &[b, self.n_endo * self.lookback])?,
                ag::reshape(&z.x_exo, &[b, self.n_exo * self.lookback])?,
            ],
            1,
        )?;
        let hidden = self.backbone.forward(&history)?;
        let fused = ag::concat(&[hidden, ag::reshape(y_exo, &[b, self.n_exo * self.horizon])?], 1)?;
        let y = ag::reshape(&self.head.forward(&fused)?, &[b, self.n_endo, self.horizon])?;
        denormalize(self.normalize, &y, &z.endo)
    }
}

impl Forecaster for MlpFusion {
    fn parameters(&self) -> Vec<Parameter> {
        self.params.clone()
    }

    fn trainable_parameters(&self) -> Vec<Parameter> {
        self.params.clone()
    }

    fn losses(&self, batch: &Batch) -> Result<StepLosses> {
        let target = batch
            .y_endo
            .as_ref()
            .ok_or_else(|| DagError::contract("training batch has no endogenous targets"))?;
        let pred = self.forward(batch)?;
        let target = Tensor::new(target.clone(), pred.shape())?;
        let l_f = ag::l1_loss(&pred, &target)?;
        Ok(StepLosses {
            total: l_f.clone(),
            l_f,
            l_t: None,
            l_c: None,
        })
    }

    fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let _g = no_grad();
        Ok(self.forward(batch)?.to_vec())
    }

    fn bytes_per_sample(&self) -> usize {
        8 * ((self.n_endo + self.n_exo) * (self.lookback + self.horizon) + 4 * self.head.hidden.fan_out())
    }
}
