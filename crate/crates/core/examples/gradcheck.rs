//! Compare the analytic gradient of the total loss with central finite
//! differences on every entry of the shared query/key projections.
//!
//! cargo run --example gradcheck

use dag_forecast::autograd::no_grad;
use dag_forecast::data::Batch;
use dag_forecast::model::{DagConfig, DagModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dag_forecast::Result<()> {
    let cfg = DagConfig::new(1, 2, 16, 4).with_d_model(8).with_patch(8, 8);
    let model = DagModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    let batch = Batch {
        size: 2,
        n_endo: 1,
        n_exo: 2,
        lookback: 16,
        horizon: 4,
        x_endo: draw(32),
        x_exo: draw(64),
        y_exo: Some(draw(16)),
        y_endo: Some(draw(8)),
    };
    let loss = || -> dag_forecast::Result<f64> { Ok(model.forward(&batch)?.losses.expect("targets").total.item()) };

    model.forward(&batch)?.losses.expect("targets").total.backward()?;
    let h = 1e-5;
    for name in ["temporal.discovery.w_q_prime", "channel.discovery.w_k_prime"] {
        let p = model.parameter(name).expect("shared projection");
        let grad = p.tensor.grad().expect("gradient reached");
        let mut worst = 0.0f64;
        for i in 0..grad.len() {
            let _g = no_grad();
            let orig = p.tensor.to_vec();
            let mut v = orig.clone();
            v[i] += h;
            p.tensor.set_data(&v)?;
            let up = loss()?;
            v[i] -= 2.0 * h;
            p.tensor.set_data(&v)?;
            let down = loss()?;
            p.tensor.set_data(&orig)?;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-4));
        }
        println!("{name}: {} entries, max relative error {worst:.2e}", grad.len());
    }
    Ok(())
}
