//! Temporal causal modules.
//!
//! The discovery network forecasts future exogenous values from their
//! history over patch tokens. The injection network forecasts the endogenous
//! future from its own history, and its attention additionally reads the
//! discovery network's query/key projections through a gated score mix.
//!
//! All channels share weights and are processed independently: the inputs
//! are folded into the batch axis before patching.

use crate::attention::{
    causal_trm_block, gate_alpha, trm_block, Alpha, CausalTrmBlockParams, GateParams, TrmBlockParams,
};
use crate::autograd::{self as ag, Tensor};
use crate::embedding::{patch_embed, patchify, PatchEmbedParams, PatchGeometry};
use crate::error::{DagError, Result};
use crate::layers::{Linear, ParamBuilder};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemporalDims {
    pub geometry: PatchGeometry,
    pub horizon: usize,
    pub d_model: usize,
    pub ff_hidden: usize,
    pub gate_hidden: usize,
    pub heads: usize,
    pub layers: usize,
}

fn block_prefix(base: &str, layer: usize) -> String {
    if layer == 0 {
        base.to_string()
    } else {
        format!("{base}.layer{layer}")
    }
}

#[derive(Clone, Debug)]
pub struct TemporalDiscoveryNet {
    pub geometry: PatchGeometry,
    pub embed: PatchEmbedParams,
    pub blocks: Vec<TrmBlockParams>,
    /// `[(M·d) × F]`
    pub head: Linear,
}

impl TemporalDiscoveryNet {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, dims: &TemporalDims) -> Result<Self> {
        let embed = PatchEmbedParams::new(pb, prefix, &dims.geometry, dims.d_model)?;
        let blocks = (0..dims.layers)
            .map(|l| {
                TrmBlockParams::new(
                    pb,
                    &block_prefix(prefix, l),
                    dims.d_model,
                    dims.ff_hidden,
                    dims.heads,
                    true,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let flat = dims.geometry.patch_count() * dims.d_model;
        let head = Linear::new(pb, &format!("{prefix}.head"), flat, dims.horizon, true)?;
        Ok(TemporalDiscoveryNet {
            geometry: dims.geometry,
            embed,
            blocks,
            head,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TemporalInjectionNet {
    pub geometry: PatchGeometry,
    pub embed: PatchEmbedParams,
    pub blocks: Vec<CausalTrmBlockParams>,
    pub gate: GateParams,
    pub head: Linear,
}

impl TemporalInjectionNet {
    /// Builds the injection network with attention projections aliasing
    /// those of `discovery`, layer by layer.
    pub fn new(
        pb: &mut ParamBuilder,
        prefix: &str,
        dims: &TemporalDims,
        discovery: &TemporalDiscoveryNet,
        double_softmax: bool,
    ) -> Result<Self> {
        let embed = PatchEmbedParams::new(pb, prefix, &dims.geometry, dims.d_model)?;
        let blocks = discovery
            .blocks
            .iter()
            .enumerate()
            .map(|(l, src)| {
                let own = TrmBlockParams::new(
                    pb,
                    &block_prefix(prefix, l),
                    dims.d_model,
                    dims.ff_hidden,
                    dims.heads,
                    false,
                )?;
                CausalTrmBlockParams::new(own, src, double_softmax)
            })
            .collect::<Result<Vec<_>>>()?;
        let t = dims.geometry.lookback;
        let gate = GateParams::new(pb, &format!("{prefix}.gate"), t, t, dims.gate_hidden)?;
        let flat = dims.geometry.patch_count() * dims.d_model;
        let head = Linear::new(pb, &format!("{prefix}.head"), flat, dims.horizon, true)?;
        Ok(TemporalInjectionNet {
            geometry: dims.geometry,
            embed,
            blocks,
            gate,
            head,
        })
    }
}

/// Accepts `[C×T]` or `[B×C×T]`; returns the batched view and whether a batch
/// axis was added.
pub(crate) fn batched3(x: &Tensor, op: &'static str) -> Result<(Tensor, bool)> {
    match x.shape() {
        [c, t] => Ok((ag::reshape(x, &[1, *c, *t])?, true)),
        [_, _, _] => Ok((x.clone(), false)),
        other => Err(DagError::dim(op, other, &[])),
    }
}

pub(crate) fn unbatch(x: Tensor, squeezed: bool) -> Result<Tensor> {
    if squeezed {
        ag::reshape(&x, &x.shape()[1..])
    } else {
        Ok(x)
    }
}

fn tokens_of(x: &Tensor, geom: &PatchGeometry, embed: &PatchEmbedParams) -> Result<Tensor> {
    let (b, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let flat = ag::reshape(x, &[b * c, t])?;
    patch_embed(&patchify(&flat, geom)?, embed)
}

/// Forecasts the exogenous future. `x_exo` is `[D×T]` or `[B×D×T]`; returns
/// `ŷ_exo` (`[.., D, F]`) and the final tokens (`[.., D, M, d]`).
pub fn temporal_discovery_forward(x_exo: &Tensor, net: &TemporalDiscoveryNet) -> Result<(Tensor, Tensor)> {
    let (x, squeezed) = batched3(x_exo, "temporal_discovery")?;
    if x.shape()[2] != net.geometry.lookback {
        return Err(DagError::dim("temporal_discovery", x.shape(), &[net.geometry.lookback]));
    }
    let (b, d) = (x.shape()[0], x.shape()[1]);
    let mut tokens = tokens_of(&x, &net.geometry, &net.embed)?;
    for block in &net.blocks {
        tokens = trm_block(&tokens, block)?.0;
    }
    let (m, w) = (tokens.shape()[1], tokens.shape()[2]);
    let y = net.head.forward(&ag::reshape(&tokens, &[b * d, m * w])?)?;
    let y = ag::reshape(&y, &[b, d, net.head.fan_out()])?;
    let tokens = ag::reshape(&tokens, &[b, d, m, w])?;
    Ok((unbatch(y, squeezed)?, unbatch(tokens, squeezed)?))
}

/// Per-channel gate: conditions on the exogenous history averaged over its
/// channels and on each endogenous channel's own history. Returns `[B·N]`.
pub fn temporal_alpha(x_endo: &Tensor, x_exo: &Tensor, gate: &GateParams) -> Result<Tensor> {
    let (b, n, t) = (x_endo.shape()[0], x_endo.shape()[1], x_endo.shape()[2]);
    let exo_mean = ag::mean_axis(x_exo, 1)?;
    let cond_a = ag::reshape(&ag::expand_axis(&exo_mean, 1, n)?, &[b * n, t])?;
    let cond_b = ag::reshape(x_endo, &[b * n, t])?;
    gate_alpha(&cond_a, &cond_b, gate)
}

/// How the injection mixing weight is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaMode {
    Gated,
    Fixed(f64),
}

/// Forecasts the endogenous future from its history. Inputs `[N×T]`/`[D×T]`
/// or batched; returns `ÿ_endo` (`[.., N, F]`) and the per-channel alphas
/// (`[.., N]`).
pub fn temporal_injection_forward(
    x_endo: &Tensor,
    x_exo: &Tensor,
    nets: (&TemporalDiscoveryNet, &TemporalInjectionNet),
    mode: AlphaMode,
) -> Result<(Tensor, Tensor)> {
    let (_, inj) = nets;
    let (xe, squeezed) = batched3(x_endo, "temporal_injection")?;
    let (xx, _) = batched3(x_exo, "temporal_injection")?;
    let (b, n, t) = (xe.shape()[0], xe.shape()[1], xe.shape()[2]);
    if t != inj.geometry.lookback || xx.shape()[0] != b || xx.shape()[2] != t {
        return Err(DagError::dim("temporal_injection", xe.shape(), xx.shape()));
    }
    let (alpha, alpha_values) = match mode {
        AlphaMode::Gated => {
            let a = temporal_alpha(&xe, &xx, &inj.gate)?;
            (Alpha::Gated(a.clone()), a)
        }
        AlphaMode::Fixed(v) => (Alpha::Fixed(v), Tensor::new(vec![v; b * n], &[b * n])?),
    };
    let mut tokens = tokens_of(&xe, &inj.geometry, &inj.embed)?;
    for block in &inj.blocks {
        tokens = causal_trm_block(&tokens, block, &alpha)?.0;
    }
    let (m, w) = (tokens.shape()[1], tokens.shape()[2]);
    let y = inj.head.forward(&ag::reshape(&tokens, &[b * n, m * w])?)?;
    let y = ag::reshape(&y, &[b, n, inj.head.fan_out()])?;
    let alphas = ag::reshape(&alpha_values, &[b, n])?;
    Ok((unbatch(y, squeezed)?, unbatch(alphas, squeezed)?))
}

/// Temporal causality loss: mean absolute error of the exogenous forecast.
pub fn temporal_loss(y_exo: &Tensor, y_exo_hat: &Tensor) -> Result<Tensor> {
    ag::l1_loss(y_exo_hat, y_exo)
}
