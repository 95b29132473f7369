//! The MLP-fusion baseline (linear backbone over the history, concatenated
//! with the future exogenous values) against the full model, same data and
//! seeds.
//!
//! cargo run --release --example baseline

use dag_forecast::data::synth::{gen_synthetic, SyntheticSpec};
use dag_forecast::model::DagConfig;
use dag_forecast::train::{run_baseline_mlp_fusion, run_variant, AblationVariant, ExperimentConfig, ExperimentData};

fn main() -> dag_forecast::Result<()> {
    for seed in 0..3 {
        let ds = gen_synthetic(&SyntheticSpec::planted(4, 1, 3_000, seed))?;
        let mut model = DagConfig::new(1, 4, 24, 6).with_d_model(16).with_patch(8, 8);
        model.normalize = false;
        model.seed = seed;
        let mut cfg = ExperimentConfig::new(model);
        cfg.train.epochs = 6;
        cfg.train.adam.lr = 5e-3;
        cfg.train.seed = seed;
        let data = ExperimentData::new(&ds, cfg.split, 24, 6)?;
        let full = run_variant(&data, &cfg, AblationVariant::Full)?;
        let base = run_baseline_mlp_fusion(&data, &cfg)?;
        println!(
            "seed {seed}: full MSE {:.5}   MLP fusion MSE {:.5}",
            full.metrics.mse, base.metrics.mse
        );
    }
    Ok(())
}
