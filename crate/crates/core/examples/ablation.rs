//! The six-way ablation: each injection network alone, both without
//! discovery, each discovery/injection pair, and the full model.
//!
//! cargo run --release --example ablation

use dag_forecast::data::synth::{gen_synthetic, SyntheticSpec};
use dag_forecast::model::DagConfig;
use dag_forecast::train::{run_ablation, ExperimentConfig, ExperimentData};

fn main() -> dag_forecast::Result<()> {
    let ds = gen_synthetic(&SyntheticSpec::planted(4, 1, 3_000, 2))?;
    let mut model = DagConfig::new(1, 4, 24, 6).with_d_model(16).with_patch(8, 8);
    model.normalize = false;
    let mut cfg = ExperimentConfig::new(model);
    cfg.train.epochs = 6;
    cfg.train.adam.lr = 5e-3;
    let data = ExperimentData::new(&ds, cfg.split, 24, 6)?;

    println!("{:<16} {:>10} {:>10}  aux losses", "variant", "test MSE", "test MAE");
    for r in run_ablation(&data, &cfg)? {
        let aux = match (r.train_l_t, r.train_l_c) {
            (Some(_), Some(_)) => "L_t, L_c",
            (Some(_), None) => "L_t",
            (None, Some(_)) => "L_c",
            (None, None) => "-",
        };
        println!(
            "{:<16} {:>10.5} {:>10.5}  {aux}",
            r.variant, r.metrics.mse, r.metrics.mae
        );
    }
    Ok(())
}
