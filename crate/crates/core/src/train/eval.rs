use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Forecaster;
use crate::data::{format_f64, Batch, WindowedSample};
use crate::error::{DagError, Result};

/// Source of the future exogenous values at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FutureExo {
    /// Observed values from the window.
    Observed,
    /// The model's own exogenous forecast.
    Forecast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    /// 1-based forecast step.
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub per_horizon: Vec<HorizonMetrics>,
    pub windows: usize,
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64
}

pub fn mae(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}

/// Predictions for every window in order, each `[N × F]` flat.
pub fn predict_windows<M: Forecaster + ?Sized>(
    model: &M,
    windows: &[WindowedSample],
    n_endo: usize,
    n_exo: usize,
    batch_size: usize,
    mode: FutureExo,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size.max(1)) {
        let refs: Vec<&WindowedSample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs, n_endo, n_exo)?.without_targets();
        let pred = match mode {
            FutureExo::Observed => model.predict(&batch)?,
            FutureExo::Forecast => model.predict_without_future_exo(&batch.without_future_exo())?,
        };
        let per = pred.len() / chunk.len();
        out.extend(pred.chunks(per).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// MSE and MAE over every (window, channel, step) entry in the original
/// scale. Sums run in window order, so results do not depend on batching.
pub fn evaluate<M: Forecaster + ?Sized>(
    model: &M,
    windows: &[WindowedSample],
    (n, d): (usize, usize),
    batch_size: usize,
    mode: FutureExo,
) -> Result<Metrics> {
    let first = windows
        .first()
        .ok_or_else(|| DagError::contract("no windows to evaluate"))?;
    let f = first.y_endo.len() / n;
    let preds = predict_windows(model, windows, n, d, batch_size, mode)?;
    let mut sq = vec![0.0; f];
    let mut ab = vec![0.0; f];
    for (w, p) in windows.iter().zip(&preds) {
        for (k, (pv, tv)) in p.iter().zip(&w.y_endo).enumerate() {
            let e = pv - tv;
            sq[k % f] += e * e;
            ab[k % f] += e.abs();
        }
    }
    let per_step = (windows.len() * n) as f64;
    let per_horizon = (0..f)
        .map(|k| HorizonMetrics {
            horizon: k + 1,
            mse: sq[k] / per_step,
            mae: ab[k] / per_step,
        })
        .collect();
    let total = per_step * f as f64;
    let m = Metrics {
        mse: sq.iter().sum::<f64>() / total,
        mae: ab.iter().sum::<f64>() / total,
        per_horizon,
        windows: windows.len(),
    };
    if !(m.mse.is_finite() && m.mae.is_finite()) {
        return Err(DagError::Numeric {
            op: "evaluate",
            msg: "non-finite metric".into(),
        });
    }
    Ok(m)
}

/// One evaluated run. `wall_clock_secs` is kept out of serialized records so
/// repeated evaluations emit byte-identical output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub variant: String,
    /// Hash of the run configuration, without the variant.
    pub fingerprint: String,
    pub split: String,
    pub future_exo: FutureExo,
    pub metrics: Metrics,
    /// Last-epoch mean training losses by term.
    pub train_l_total: Option<f64>,
    pub train_l_f: Option<f64>,
    pub train_l_t: Option<f64>,
    pub train_l_c: Option<f64>,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl EvalReport {
    /// Metrics CSV rows: one per horizon step and one `all` row.
    pub fn csv_rows(&self) -> Vec<String> {
        let row = |h: &str, mse: f64, mae: f64| {
            format!(
                "{},{},{},{},{}",
                self.run_id,
                self.variant,
                h,
                format_f64(mse),
                format_f64(mae)
            )
        };
        let mut rows: Vec<String> = self
            .metrics
            .per_horizon
            .iter()
            .map(|m| row(&m.horizon.to_string(), m.mse, m.mae))
            .collect();
        rows.push(row("all", self.metrics.mse, self.metrics.mae));
        rows
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub const METRICS_HEADER: &str = "run_id,variant,horizon,mse,mae";

pub fn write_metrics_csv<W: Write>(mut out: W, reports: &[EvalReport]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in reports {
        for row in r.csv_rows() {
            writeln!(out, "{row}")?;
        }
    }
    Ok(())
}
