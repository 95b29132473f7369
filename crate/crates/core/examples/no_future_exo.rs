//! Forecasting without observed future exogenous values: the temporal
//! discovery network's exogenous forecast takes their place.
//!
//! cargo run --release --example no_future_exo

use dag_forecast::data::synth::{gen_synthetic, SyntheticSpec};
use dag_forecast::data::Batch;
use dag_forecast::model::DagConfig;
use dag_forecast::train::{evaluate, train_variant, AblationVariant, ExperimentConfig, ExperimentData, FutureExo};

fn main() -> dag_forecast::Result<()> {
    let ds = gen_synthetic(&SyntheticSpec::planted(4, 1, 3_000, 3))?;
    let mut model = DagConfig::new(1, 4, 24, 6).with_d_model(16).with_patch(8, 8);
    model.normalize = false;
    let mut cfg = ExperimentConfig::new(model);
    cfg.train.epochs = 6;
    cfg.train.adam.lr = 5e-3;
    let data = ExperimentData::new(&ds, cfg.split, 24, 6)?;
    let run = train_variant(&data, &cfg, AblationVariant::Full)?;

    for mode in [FutureExo::Observed, FutureExo::Forecast] {
        let m = evaluate(&run.model, &data.test, (1, 4), 64, mode)?;
        println!("{mode:?}: test MSE {:.5}  MAE {:.5}", m.mse, m.mae);
    }

    // the substitution is exact: predicting with the forecast plugged in as
    // observed values gives the same numbers
    let refs: Vec<_> = data.test.iter().take(4).collect();
    let batch = Batch::from_samples(&refs, 1, 4)?;
    let exo_hat = run.model.forecast_exo(&batch)?;
    let mut plugged = batch.clone();
    plugged.y_exo = Some(exo_hat);
    let direct = run.model.predict_without_future_exo(&batch.without_future_exo())?;
    println!(
        "substitution identity holds: {}",
        direct == run.model.predict(&plugged)?
    );
    Ok(())
}
