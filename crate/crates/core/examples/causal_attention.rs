//! A causal attention block mixing its own attention score with the score
//! from borrowed query/key projections, swept over the mixing weight.
//!
//! cargo run --example causal_attention

use dag_forecast::attention::{
    causal_trm_block, gate_alpha, trm_block, Alpha, CausalTrmBlockParams, GateParams, TrmBlockParams,
};
use dag_forecast::autograd::Tensor;
use dag_forecast::layers::ParamBuilder;

fn main() -> dag_forecast::Result<()> {
    let (d, m) = (8, 4);
    let mut pb = ParamBuilder::new(7);
    // the discovery block exports its query/key projections
    let source = TrmBlockParams::new(&mut pb, "discovery", d, 2 * d, 1, true)?;
    let own = TrmBlockParams::new(&mut pb, "injection", d, 2 * d, 1, false)?;
    let block = CausalTrmBlockParams::new(own, &source, false)?;

    let tokens = Tensor::new(
        (0..m * d).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect(),
        &[1, m, d],
    )?;
    let (_, own_score) = trm_block(&tokens, &block.own)?;
    println!("own score row 0: {:.3?}", &own_score.to_vec()[..m]);
    for alpha in [1.0, 0.75, 0.5, 0.25, 0.0] {
        let (_, fused) = causal_trm_block(&tokens, &block, &Alpha::Fixed(alpha))?;
        println!("alpha {alpha:.2}: fused row 0 {:.3?}", &fused.to_vec()[..m]);
    }

    // the learned gate starts at exactly one half
    let gate = GateParams::new(&mut pb, "gate", 12, 6, 8)?;
    let a = Tensor::new((0..24).map(|i| (i as f64).sin()).collect(), &[2, 12])?;
    let b = Tensor::new((0..12).map(|i| (i as f64).cos()).collect(), &[2, 6])?;
    println!("fresh gate alpha: {:?}", gate_alpha(&a, &b, &gate)?.to_vec());
    Ok(())
}
