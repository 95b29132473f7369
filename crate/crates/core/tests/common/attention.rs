//! Random attention-block instances for the property suites.

use dag_forecast::attention::{Alpha, CausalTrmBlockParams, TrmBlockParams};
use dag_forecast::autograd::Tensor;
use dag_forecast::layers::ParamBuilder;
use rand::Rng;

use super::{rng, uniform};

pub struct Instance {
    pub tokens: Tensor,
    pub source: TrmBlockParams,
    pub causal: CausalTrmBlockParams,
    pub alpha: f64,
    pub batch: usize,
    pub m: usize,
}

/// Block dimensions, heads, batch, token count, inputs and mixing weight all
/// drawn from `seed`.
pub fn instance(seed: u64, double_softmax: bool) -> Instance {
    let mut r = rng(seed);
    let d = [4, 8][r.gen_range(0..2)];
    let heads = if r.gen_bool(0.25) { 2 } else { 1 };
    let (batch, m) = (r.gen_range(1..4), r.gen_range(1..7));
    let mut pb = ParamBuilder::new(seed);
    let source = TrmBlockParams::new(&mut pb, "src", d, 2 * d, heads, true).unwrap();
    let own = TrmBlockParams::new(&mut pb, "own", d, 2 * d, heads, false).unwrap();
    let causal = CausalTrmBlockParams::new(own, &source, double_softmax).unwrap();
    let scale = r.gen_range(0.5..4.0);
    let tokens = Tensor::new(uniform(&mut r, batch * m * d, -scale, scale), &[batch, m, d]).unwrap();
    Instance {
        tokens,
        source,
        causal,
        alpha: r.gen_range(0.0..=1.0),
        batch,
        m,
    }
}

pub fn gated(value: f64, batch: usize) -> Alpha {
    Alpha::Gated(Tensor::new(vec![value; batch], &[batch]).unwrap())
}

/// The own block with its query/key projections replaced by the injected ones.
pub fn injected_only(c: &CausalTrmBlockParams) -> TrmBlockParams {
    TrmBlockParams {
        w_q: c.injected_q.clone(),
        w_k: c.injected_k.clone(),
        ..c.own.clone()
    }
}
