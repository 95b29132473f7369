//! One full-model run per lookback; lookbacks that leave a split without
//! windows are reported as skipped.
//!
//! cargo run --release --example lookback_sweep

use dag_forecast::data::synth::{gen_synthetic, SyntheticSpec};
use dag_forecast::model::DagConfig;
use dag_forecast::train::{lookback_sweep, ExperimentConfig};

fn main() -> dag_forecast::Result<()> {
    let ds = gen_synthetic(&SyntheticSpec::planted(2, 1, 1_200, 4))?;
    let mut model = DagConfig::new(1, 2, 16, 6).with_d_model(8).with_patch(8, 8);
    model.normalize = false;
    let mut cfg = ExperimentConfig::new(model);
    cfg.train.epochs = 4;
    cfg.train.adam.lr = 5e-3;

    for row in lookback_sweep(&ds, &cfg, &[8, 16, 32, 64, 256])? {
        match (row.report, row.skipped) {
            (Some(r), _) => println!(
                "T={:>3}: test MSE {:.5}  MAE {:.5}",
                row.lookback, r.metrics.mse, r.metrics.mae
            ),
            (None, Some(why)) => println!("T={:>3}: skipped ({why})", row.lookback),
            (None, None) => unreachable!(),
        }
    }
    Ok(())
}
