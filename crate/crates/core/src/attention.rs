//! Transformer blocks with optional injected query/key projections and the
//! gate that weights own against injected attention scores.
//!
//! Blocks use pre-norm residual wiring:
//!
//! ```text
//! x1  = x  + Attn(LN1(x))
//! out = x1 + FF(LN2(x1))
//! ```
//!
//! `Attn` has no output projection; the attended values are merged back to
//! width `d` directly.

use crate::autograd::{self as ag, Tensor};
use crate::error::{DagError, Result};
use crate::layers::{Linear, ParamBuilder};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: pb.constant(format!("{prefix}.gamma"), &[d], 1.0)?,
            beta: pb.constant(format!("{prefix}.beta"), &[d], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let n = ag::layer_norm_last(x, LN_EPS)?;
        ag::add_trailing(&ag::mul_trailing(&n, &self.gamma)?, &self.beta)
    }
}

/// Two linear layers `d → h_ff → d` with GELU in between.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, d: usize, hidden: usize) -> Result<Self> {
        Ok(FeedForward {
            up: Linear::new(pb, &format!("{prefix}.ff_up"), d, hidden, true)?,
            down: Linear::new(pb, &format!("{prefix}.ff_down"), hidden, d, true)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.down.forward(&ag::gelu(&self.up.forward(x)?))
    }
}

#[derive(Clone, Debug)]
pub struct TrmBlockParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub ln_attn: LayerNorm,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
    pub heads: usize,
}

impl TrmBlockParams {
    /// Projection names follow the `w_q_prime` convention of the discovery
    /// networks when `exported` is set, since those are the matrices other
    /// networks reuse.
    pub fn new(
        pb: &mut ParamBuilder,
        prefix: &str,
        d: usize,
        ff_hidden: usize,
        heads: usize,
        exported: bool,
    ) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(DagError::contract(format!(
                "token width {d} not divisible by {heads} heads"
            )));
        }
        let suffix = if exported { "_prime" } else { "" };
        Ok(TrmBlockParams {
            w_q: pb.uniform(format!("{prefix}.w_q{suffix}"), &[d, d], d)?,
            w_k: pb.uniform(format!("{prefix}.w_k{suffix}"), &[d, d], d)?,
            w_v: pb.uniform(format!("{prefix}.w_v{suffix}"), &[d, d], d)?,
            ln_attn: LayerNorm::new(pb, &format!("{prefix}.ln_attn"), d)?,
            ln_ff: LayerNorm::new(pb, &format!("{prefix}.ln_ff"), d)?,
            ff: FeedForward::new(pb, prefix, d, ff_hidden)?,
            heads,
        })
    }

    pub fn width(&self) -> usize {
        self.w_q.shape()[0]
    }
}

/// A block whose attention also reads the query/key projections of another
/// block. `injected_q`/`injected_k` are handles to that block's storage.
#[derive(Clone, Debug)]
pub struct CausalTrmBlockParams {
    pub own: TrmBlockParams,
    pub injected_q: Tensor,
    pub injected_k: Tensor,
    pub double_softmax: bool,
}

impl CausalTrmBlockParams {
    pub fn new(own: TrmBlockParams, source: &TrmBlockParams, double_softmax: bool) -> Result<Self> {
        if own.width() != source.width() || own.heads != source.heads {
            return Err(DagError::dim("causal_block", own.w_q.shape(), source.w_q.shape()));
        }
        Ok(CausalTrmBlockParams {
            injected_q: source.w_q.clone(),
            injected_k: source.w_k.clone(),
            own,
            double_softmax,
        })
    }
}

/// Mixing weight fed to a causal block: one value per batch item.
#[derive(Clone, Debug)]
pub enum Alpha {
    /// Learned, shape `[B]`.
    Gated(Tensor),
    /// Fixed value for every batch item (ablations and tests).
    Fixed(f64),
}

fn as_batched(tokens: &Tensor, d: usize) -> Result<(Tensor, bool)> {
    match tokens.shape() {
        [_, w] if *w == d => Ok((ag::reshape(tokens, &[1, tokens.shape()[0], d])?, true)),
        [_, _, w] if *w == d => Ok((tokens.clone(), false)),
        other => Err(DagError::dim("attention", other, &[d])),
    }
}

fn split_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    if heads == 1 {
        return Ok(x.clone());
    }
    let (b, m, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let dh = d / heads;
    let y = ag::permute(&ag::reshape(x, &[b, m, heads, dh])?, &[0, 2, 1, 3])?;
    ag::reshape(&y, &[b * heads, m, dh])
}

fn merge_heads(x: &Tensor, heads: usize) -> Result<Tensor> {
    if heads == 1 {
        return Ok(x.clone());
    }
    let (bh, m, dh) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let b = bh / heads;
    let y = ag::permute(&ag::reshape(x, &[b, heads, m, dh])?, &[0, 2, 1, 3])?;
    ag::reshape(&y, &[b, m, heads * dh])
}

/// `softmax(Q·Kᵀ/√d_head)` for already head-split `q`, `k`.
fn attention_scores(q: &Tensor, k: &Tensor) -> Result<Tensor> {
    let dh = *q.shape().last().unwrap_or(&1) as f64;
    let logits = ag::scale(&ag::matmul(q, &ag::transpose(k)?)?, 1.0 / dh.sqrt());
    ag::softmax_rows(&logits)
}

fn project_scores(h: &Tensor, w_q: &Tensor, w_k: &Tensor, heads: usize) -> Result<Tensor> {
    let q = split_heads(&ag::matmul(h, w_q)?, heads)?;
    let k = split_heads(&ag::matmul(h, w_k)?, heads)?;
    attention_scores(&q, &k)
}

fn finish_block(x: &Tensor, weights: &Tensor, h: &Tensor, p: &TrmBlockParams) -> Result<Tensor> {
    let v = split_heads(&ag::matmul(h, &p.w_v)?, p.heads)?;
    let attended = merge_heads(&ag::matmul(weights, &v)?, p.heads)?;
    let x1 = ag::add(x, &attended)?;
    let ff = p.ff.forward(&p.ln_ff.forward(&x1)?)?;
    ag::add(&x1, &ff)
}

fn unbatch(out: Tensor, score: Tensor, squeezed: bool, heads: usize) -> Result<(Tensor, Tensor)> {
    let m = score.shape()[1];
    let b = score.shape()[0] / heads;
    let score = if squeezed {
        if heads == 1 {
            ag::reshape(&score, &[m, m])?
        } else {
            ag::reshape(&score, &[heads, m, m])?
        }
    } else if heads > 1 {
        ag::reshape(&score, &[b, heads, m, m])?
    } else {
        score
    };
    let out = if squeezed {
        ag::reshape(&out, &out.shape()[1..])?
    } else {
        out
    };
    Ok((out, score))
}

/// Standard block over tokens `[M×d]` or `[B×M×d]`. Returns the block output
/// and the attention score (`[M×M]`, `[B×M×M]`, or with a head axis).
pub fn trm_block(tokens: &Tensor, params: &TrmBlockParams) -> Result<(Tensor, Tensor)> {
    let (x, squeezed) = as_batched(tokens, params.width())?;
    let h = params.ln_attn.forward(&x)?;
    let score = project_scores(&h, &params.w_q, &params.w_k, params.heads)?;
    let out = finish_block(&x, &score, &h, params)?;
    unbatch(out, score, squeezed, params.heads)
}

/// Block whose attention weights are the convex combination
/// `alpha·score_own + (1 − alpha)·score_injected`. Returns the output and the
/// fused score (before the optional second softmax).
pub fn causal_trm_block(tokens: &Tensor, params: &CausalTrmBlockParams, alpha: &Alpha) -> Result<(Tensor, Tensor)> {
    let own = &params.own;
    let (x, squeezed) = as_batched(tokens, own.width())?;
    let batch = x.shape()[0];

    let h = own.ln_attn.forward(&x)?;
    let score_own = project_scores(&h, &own.w_q, &own.w_k, own.heads)?;

    let fused = match alpha {
        Alpha::Fixed(a) if !(0.0..=1.0).contains(a) => {
            return Err(DagError::contract(format!("alpha {a} outside [0, 1]")));
        }
        // the injected branch contributes exactly zero
        Alpha::Fixed(a) if *a == 1.0 => score_own,
        Alpha::Fixed(a) => {
            let score_inj = project_scores(&h, &params.injected_q, &params.injected_k, own.heads)?;
            ag::mix(&Tensor::new(vec![*a; batch], &[batch])?, &score_own, &score_inj)?
        }
        Alpha::Gated(a) => {
            if a.numel() != batch {
                return Err(DagError::dim("causal_block.alpha", a.shape(), &[batch]));
            }
            if let Some(bad) = a.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(DagError::contract(format!("alpha {bad} outside [0, 1]")));
            }
            let score_inj = project_scores(&h, &params.injected_q, &params.injected_k, own.heads)?;
            ag::mix(a, &score_own, &score_inj)?
        }
    };

    let weights = if params.double_softmax {
        ag::softmax_rows(&fused)?
    } else {
        fused.clone()
    };
    let out = finish_block(&x, &weights, &h, own)?;
    unbatch(out, fused, squeezed, own.heads)
}

/// Two-layer perceptron with ReLU hidden activation.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
}

impl Mlp {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, input: usize, hidden: usize, output: usize) -> Result<Self> {
        Ok(Mlp {
            hidden: Linear::new(pb, &format!("{prefix}.hidden"), input, hidden, true)?,
            out: Linear::new(pb, &format!("{prefix}.out"), hidden, output, true)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.out.forward(&ag::relu(&self.hidden.forward(x)?))
    }
}

#[derive(Clone, Debug)]
pub struct GateParams {
    pub mlp_a: Mlp,
    pub mlp_b: Mlp,
}

impl GateParams {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, width_a: usize, width_b: usize, hidden: usize) -> Result<Self> {
        let mlp_a = Mlp::new(pb, &format!("{prefix}.mlp_a"), width_a, hidden, hidden)?;
        let mlp_b = Mlp::new(pb, &format!("{prefix}.mlp_b"), width_b, hidden, hidden)?;
        // alpha starts at exactly 0.5; mlp_a still receives gradient through mlp_b
        mlp_a.out.zero();
        Ok(GateParams { mlp_a, mlp_b })
    }
}

/// `sigmoid(mlp_a(cond_a) · mlp_b(cond_b))`, one value per row: `[G×wa], [G×wb] -> [G]`.
pub fn gate_alpha(cond_a: &Tensor, cond_b: &Tensor, params: &GateParams) -> Result<Tensor> {
    let wa = params.mlp_a.hidden.fan_in();
    let wb = params.mlp_b.hidden.fan_in();
    if cond_a.rank() != 2 || cond_a.shape()[1] != wa {
        return Err(DagError::dim("gate_alpha", cond_a.shape(), &[wa]));
    }
    if cond_b.rank() != 2 || cond_b.shape()[1] != wb || cond_b.shape()[0] != cond_a.shape()[0] {
        return Err(DagError::dim("gate_alpha", cond_b.shape(), &[cond_a.shape()[0], wb]));
    }
    let ea = params.mlp_a.forward(cond_a)?;
    let eb = params.mlp_b.forward(cond_b)?;
    Ok(ag::sigmoid(&ag::dot_rows(&ea, &eb)?))
}
