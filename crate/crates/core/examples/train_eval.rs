//! Train the full model on synthetic data and report test metrics per
//! horizon step together with the loss trace.
//!
//! cargo run --release --example train_eval

use dag_forecast::data::synth::{gen_synthetic, SyntheticSpec};
use dag_forecast::model::DagConfig;
use dag_forecast::train::{report, train_variant, AblationVariant, ExperimentConfig, ExperimentData, FutureExo};

fn main() -> dag_forecast::Result<()> {
    let ds = gen_synthetic(&SyntheticSpec::planted(4, 1, 3_000, 1))?;
    let mut model = DagConfig::new(1, 4, 24, 6).with_d_model(16).with_patch(8, 8);
    model.normalize = false;
    let mut cfg = ExperimentConfig::new(model);
    cfg.train.epochs = 8;
    cfg.train.adam.lr = 5e-3;
    let data = ExperimentData::new(&ds, cfg.split, 24, 6)?;
    println!(
        "{} train / {} val / {} test windows",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );

    let run = train_variant(&data, &cfg, AblationVariant::Full)?;
    for e in &run.trace.epochs {
        println!(
            "epoch {:>2}: L_total {:.4}  L_f {:.4}  L_t {:.4}  L_c {:.4}  val L_f {:.4}",
            e.epoch,
            e.l_total,
            e.l_f,
            e.l_t.unwrap_or(f64::NAN),
            e.l_c.unwrap_or(f64::NAN),
            e.val_l_f.unwrap_or(f64::NAN)
        );
    }
    println!("restored epoch {}", run.trace.best_epoch);

    let r = report(
        (&run.model, &run.trace, run.wall_clock_secs),
        &data,
        &cfg,
        "full",
        FutureExo::Observed,
    )?;
    println!(
        "test MSE {:.5}  MAE {:.5} over {} windows",
        r.metrics.mse, r.metrics.mae, r.metrics.windows
    );
    for h in &r.metrics.per_horizon {
        println!("  step {:>2}: MSE {:.5}  MAE {:.5}", h.horizon, h.mse, h.mae);
    }
    Ok(())
}
