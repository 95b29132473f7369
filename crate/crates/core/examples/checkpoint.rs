//! Save a trained model with its configuration, load it into a fresh model
//! and confirm the predictions are bit-identical.
//!
//! cargo run --example checkpoint

use dag_forecast::checkpoint::Checkpoint;
use dag_forecast::data::synth::{gen_synthetic, SyntheticSpec};
use dag_forecast::data::Batch;
use dag_forecast::model::{DagConfig, DagModel};
use dag_forecast::train::{train_variant, AblationVariant, ExperimentConfig, ExperimentData};

fn main() -> dag_forecast::Result<()> {
    let ds = gen_synthetic(&SyntheticSpec::planted(2, 1, 600, 5))?;
    let cfg = {
        let mut c = ExperimentConfig::new(DagConfig::new(1, 2, 16, 4).with_d_model(8).with_patch(8, 8));
        c.train.epochs = 2;
        c
    };
    let data = ExperimentData::new(&ds, cfg.split, 16, 4)?;
    let run = train_variant(&data, &cfg, AblationVariant::Full)?;

    let path = std::env::temp_dir().join("dag_example.ckpt");
    let config = serde_json::to_string(&cfg.model).expect("config serializes");
    Checkpoint {
        config,
        records: run.model.state(),
    }
    .save(&path)?;
    println!("saved {} parameters to {}", run.model.parameter_count(), path.display());

    let loaded = Checkpoint::load(&path)?;
    let model_cfg: DagConfig = serde_json::from_str(&loaded.config).expect("config parses");
    let restored = DagModel::new(model_cfg)?;
    restored.load_state(&loaded.records)?;

    let refs: Vec<_> = data.test.iter().take(16).collect();
    let batch = Batch::from_samples(&refs, 1, 2)?;
    let same = run.model.predict(&batch)? == restored.predict(&batch)?;
    println!("restored predictions identical: {same}");
    std::fs::remove_file(&path)?;
    Ok(())
}
