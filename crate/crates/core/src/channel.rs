//! Channel causal modules.
//!
//! Each exogenous series becomes one token, so attention runs across
//! channels. The discovery network reconstructs the endogenous history from
//! the exogenous history; the injection network forecasts the endogenous
//! future from the exogenous future while reusing the discovery network's
//! query/key projections.

use crate::attention::{
    causal_trm_block, gate_alpha, trm_block, Alpha, CausalTrmBlockParams, GateParams, TrmBlockParams,
};
use crate::autograd::{self as ag, Tensor};
use crate::embedding::{series_embed, SeriesEmbedParams};
use crate::error::{DagError, Result};
use crate::layers::{Linear, ParamBuilder};
use crate::temporal::{batched3, unbatch, AlphaMode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelDims {
    pub n_endo: usize,
    pub n_exo: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub d_model: usize,
    pub ff_hidden: usize,
    pub gate_hidden: usize,
    pub heads: usize,
    pub layers: usize,
}

/// `[D×d] → [N×L]`: token-wise MLP, channel mix `[N×D]`, then temporal
/// projection `[d×L]`.
#[derive(Clone, Debug)]
pub struct ChannelHead {
    pub token_mlp: Linear,
    pub mix: Tensor,
    pub proj: Tensor,
}

impl ChannelHead {
    fn new(pb: &mut ParamBuilder, prefix: &str, dims: &ChannelDims, out_len: usize) -> Result<Self> {
        let d = dims.d_model;
        Ok(ChannelHead {
            token_mlp: Linear::new(pb, &format!("{prefix}.token_mlp"), d, d, true)?,
            mix: pb.uniform(format!("{prefix}.mix"), &[dims.n_endo, dims.n_exo], dims.n_exo)?,
            proj: pb.uniform(format!("{prefix}.proj"), &[d, out_len], d)?,
        })
    }

    fn forward(&self, tokens: &Tensor) -> Result<Tensor> {
        let h = ag::gelu(&self.token_mlp.forward(tokens)?);
        let mixed = ag::matmul(&self.mix, &h)?;
        ag::matmul(&mixed, &self.proj)
    }
}

fn block_prefix(base: &str, layer: usize) -> String {
    if layer == 0 {
        base.to_string()
    } else {
        format!("{base}.layer{layer}")
    }
}

#[derive(Clone, Debug)]
pub struct ChannelDiscoveryNet {
    pub embed: SeriesEmbedParams,
    pub blocks: Vec<TrmBlockParams>,
    pub head: ChannelHead,
}

impl ChannelDiscoveryNet {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, dims: &ChannelDims) -> Result<Self> {
        let embed = SeriesEmbedParams::new(pb, prefix, dims.lookback, dims.d_model)?;
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
        let head = ChannelHead::new(pb, &format!("{prefix}.head"), dims, dims.lookback)?;
        Ok(ChannelDiscoveryNet { embed, blocks, head })
    }
}

#[derive(Clone, Debug)]
pub struct ChannelInjectionNet {
    pub embed: SeriesEmbedParams,
    pub blocks: Vec<CausalTrmBlockParams>,
    pub gate: GateParams,
    pub head: ChannelHead,
}

impl ChannelInjectionNet {
    pub fn new(
        pb: &mut ParamBuilder,
        prefix: &str,
        dims: &ChannelDims,
        discovery: &ChannelDiscoveryNet,
        double_softmax: bool,
    ) -> Result<Self> {
        let embed = SeriesEmbedParams::new(pb, prefix, dims.horizon, dims.d_model)?;
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
        let gate = GateParams::new(
            pb,
            &format!("{prefix}.gate"),
            dims.n_exo * dims.lookback,
            dims.n_exo * dims.horizon,
            dims.gate_hidden,
        )?;
        let head = ChannelHead::new(pb, &format!("{prefix}.head"), dims, dims.horizon)?;
        Ok(ChannelInjectionNet {
            embed,
            blocks,
            gate,
            head,
        })
    }
}

/// Reconstructs the endogenous history from `x_exo` (`[D×T]` or batched).
/// Returns `x̂_endo` (`[.., N, T]`) and the last block's channel attention
/// score (`[.., D, D]`).
pub fn channel_discovery_forward(x_exo: &Tensor, net: &ChannelDiscoveryNet) -> Result<(Tensor, Tensor)> {
    let (x, squeezed) = batched3(x_exo, "channel_discovery")?;
    if x.shape()[1] != net.head.mix.shape()[1] {
        return Err(DagError::dim("channel_discovery", x.shape(), net.head.mix.shape()));
    }
    let mut tokens = series_embed(&x, &net.embed)?;
    let mut score = None;
    for block in &net.blocks {
        let (out, s) = trm_block(&tokens, block)?;
        tokens = out;
        score = Some(s);
    }
    let y = net.head.forward(&tokens)?;
    let score = score.ok_or_else(|| DagError::contract("channel discovery has no blocks"))?;
    Ok((unbatch(y, squeezed)?, unbatch(score, squeezed)?))
}

/// Global gate over the flattened exogenous history and future. Returns `[B]`.
pub fn channel_alpha(x_exo: &Tensor, y_exo: &Tensor, gate: &GateParams) -> Result<Tensor> {
    let b = x_exo.shape()[0];
    let cond_a = ag::reshape(x_exo, &[b, x_exo.numel() / b])?;
    let cond_b = ag::reshape(y_exo, &[b, y_exo.numel() / b])?;
    gate_alpha(&cond_a, &cond_b, gate)
}

/// Forecasts the endogenous future from the exogenous future. Never reads
/// endogenous data. Returns `ẏ_endo` (`[.., N, F]`) and alpha (`[..]` with one
/// value per batch item).
pub fn channel_injection_forward(
    y_exo: &Tensor,
    x_exo: &Tensor,
    nets: (&ChannelDiscoveryNet, &ChannelInjectionNet),
    mode: AlphaMode,
) -> Result<(Tensor, Tensor)> {
    let (_, inj) = nets;
    let (yx, squeezed) = batched3(y_exo, "channel_injection")?;
    let (xx, _) = batched3(x_exo, "channel_injection")?;
    let b = yx.shape()[0];
    if xx.shape()[0] != b || xx.shape()[1] != yx.shape()[1] {
        return Err(DagError::dim("channel_injection", xx.shape(), yx.shape()));
    }
    let (alpha, alpha_values) = match mode {
        AlphaMode::Gated => {
            let a = channel_alpha(&xx, &yx, &inj.gate)?;
            (Alpha::Gated(a.clone()), a)
        }
        AlphaMode::Fixed(v) => (Alpha::Fixed(v), Tensor::new(vec![v; b], &[b])?),
    };
    let mut tokens = series_embed(&yx, &inj.embed)?;
    for block in &inj.blocks {
        tokens = causal_trm_block(&tokens, block, &alpha)?.0;
    }
    let y = inj.head.forward(&tokens)?;
    let alpha_values = if squeezed {
        ag::reshape(&alpha_values, &[])?
    } else {
        alpha_values
    };
    Ok((unbatch(y, squeezed)?, alpha_values))
}

/// Channel causality loss: mean absolute reconstruction error.
pub fn channel_loss(x_endo: &Tensor, x_endo_hat: &Tensor) -> Result<Tensor> {
    ag::l1_loss(x_endo_hat, x_endo)
}
