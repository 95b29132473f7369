//! Training loop, evaluation metrics, ablations, the MLP-fusion baseline and
//! the lookback sweep.

mod baseline;
mod eval;
mod experiment;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{AdamConfig, AdamState, Parameter, Tensor};
use crate::data::{Batch, WindowedSample};
use crate::error::{DagError, Result};
use crate::model::DagModel;

pub use baseline::MlpFusion;
pub use eval::{
    evaluate, mae, mse, predict_windows, write_metrics_csv, EvalReport, FutureExo, HorizonMetrics, Metrics,
    METRICS_HEADER,
};
pub use experiment::{
    lookback_sweep, report, run_ablation, run_baseline_mlp_fusion, run_variant, train_baseline, train_variant,
    AblationVariant, ExperimentConfig, ExperimentData, SweepRow, TrainedRun,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Smallest batch size the halving policy may fall back to.
    pub min_batch_size: usize,
    /// Activation budget in bytes; `None` disables the halving policy.
    pub memory_budget: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            adam: AdamConfig::default(),
            patience: 5,
            seed: 0,
            min_batch_size: 8,
            memory_budget: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DagError::config("train.batch_size", "must be at least 1"));
        }
        if self.min_batch_size == 0 {
            return Err(DagError::config("train.min_batch_size", "must be at least 1"));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(DagError::config("train.lr", "must be positive"));
        }
        Ok(())
    }
}

/// Loss terms of one forward pass.
#[derive(Clone, Debug)]
pub struct StepLosses {
    pub total: Tensor,
    pub l_f: Tensor,
    pub l_t: Option<Tensor>,
    pub l_c: Option<Tensor>,
}

/// Anything the trainer can fit and the evaluator can score.
pub trait Forecaster {
    /// Every parameter, for snapshots and checkpoints.
    fn parameters(&self) -> Vec<Parameter>;
    /// Parameters that receive gradients from [`Forecaster::losses`].
    fn trainable_parameters(&self) -> Vec<Parameter>;
    /// Loss terms on a batch that carries endogenous targets.
    fn losses(&self, batch: &Batch) -> Result<StepLosses>;
    /// Endogenous forecast `[B × N × F]`, original scale.
    fn predict(&self, batch: &Batch) -> Result<Vec<f64>>;
    /// Endogenous forecast without observed future exogenous values.
    fn predict_without_future_exo(&self, _batch: &Batch) -> Result<Vec<f64>> {
        Err(DagError::contract("this forecaster needs future exogenous values"))
    }
    /// Rough activation footprint of one sample during a training step.
    fn bytes_per_sample(&self) -> usize;
}

impl Forecaster for DagModel {
    fn parameters(&self) -> Vec<Parameter> {
        self.named_parameters().to_vec()
    }

    fn trainable_parameters(&self) -> Vec<Parameter> {
        DagModel::trainable_parameters(self)
    }

    fn losses(&self, batch: &Batch) -> Result<StepLosses> {
        let out = self.forward(batch)?;
        let l = out
            .losses
            .ok_or_else(|| DagError::contract("training batch has no endogenous targets"))?;
        Ok(StepLosses {
            total: l.total,
            l_f: l.l_f,
            l_t: l.l_t,
            l_c: l.l_c,
        })
    }

    fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        DagModel::predict(self, batch)
    }

    fn predict_without_future_exo(&self, batch: &Batch) -> Result<Vec<f64>> {
        DagModel::predict_without_future_exo(self, batch)
    }

    fn bytes_per_sample(&self) -> usize {
        let c = &self.config;
        let m = c.geometry().map(|g| g.patch_count()).unwrap_or(1);
        let tokens = 2 * m * (c.n_endo + c.n_exo) + 4 * c.n_exo;
        // activations kept for backward: embeddings, attention, feed-forward
        8 * c.layers * tokens * (6 * c.d_model + c.ff_hidden + 2 * m.max(c.n_exo))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub l_total: f64,
    pub l_f: f64,
    pub l_t: Option<f64>,
    pub l_c: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sample-weighted means over the epoch's training batches.
    pub l_total: f64,
    pub l_f: f64,
    pub l_t: Option<f64>,
    pub l_c: Option<f64>,
    pub val_l_f: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub batch_size: usize,
}

impl LossTrace {
    pub fn last_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Columns `epoch,step,l_total,l_f,l_t,l_c`; absent terms are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(crate::data::format_f64).unwrap_or_default();
        writeln!(out, "epoch,step,l_total,l_f,l_t,l_c")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.epoch,
                s.step,
                crate::data::format_f64(s.l_total),
                crate::data::format_f64(s.l_f),
                opt(s.l_t),
                opt(s.l_c)
            )?;
        }
        Ok(())
    }
}

/// Calls `attempt` with `start`, halving the batch size after each
/// [`DagError::ResourceExhausted`] until `min` is reached.
pub fn with_batch_halving<T>(start: usize, min: usize, mut attempt: impl FnMut(usize) -> Result<T>) -> Result<T> {
    let mut size = start;
    loop {
        match attempt(size) {
            Err(DagError::ResourceExhausted(msg)) if size / 2 >= min.max(1) => {
                log::warn!("{msg}; retrying with batch size {}", size / 2);
                size /= 2;
            }
            other => return other,
        }
    }
}

fn check_budget<M: Forecaster + ?Sized>(model: &M, cfg: &TrainConfig, batch_size: usize) -> Result<()> {
    match cfg.memory_budget {
        Some(budget) if model.bytes_per_sample().saturating_mul(batch_size) > budget => {
            Err(DagError::ResourceExhausted(format!(
                "batch size {batch_size} needs more than the {budget}-byte budget"
            )))
        }
        _ => Ok(()),
    }
}

fn item_checked(t: &Tensor, what: &str) -> Result<f64> {
    let v = t.item();
    if !v.is_finite() {
        return Err(DagError::Numeric {
            op: "train",
            msg: format!("{what} is {v}"),
        });
    }
    Ok(v)
}

/// Mini-batch Adam over shuffled training windows. With validation windows,
/// stops after `patience` epochs without improvement of validation `L_f` and
/// restores the best parameters.
pub fn train<M: Forecaster + ?Sized>(
    model: &M,
    train_windows: &[WindowedSample],
    val_windows: &[WindowedSample],
    n_endo: usize,
    n_exo: usize,
    cfg: &TrainConfig,
) -> Result<LossTrace> {
    cfg.validate()?;
    if train_windows.is_empty() {
        return Err(DagError::contract("training split has no windows"));
    }
    let batch_size = with_batch_halving(cfg.batch_size, cfg.min_batch_size, |bs| {
        check_budget(model, cfg, bs).map(|_| bs)
    })?;
    let all = model.parameters();
    let trainable = model.trainable_parameters();
    let mut adam = AdamState::new(cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut trace = LossTrace {
        batch_size,
        ..LossTrace::default()
    };
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut stale = 0;
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut has = [false; 2];
        for chunk in order.chunks(batch_size) {
            let samples: Vec<&WindowedSample> = chunk.iter().map(|&i| &train_windows[i]).collect();
            let batch = Batch::from_samples(&samples, n_endo, n_exo)?;
            let losses = model.losses(&batch)?;
            let rec = StepRecord {
                epoch,
                step,
                l_total: item_checked(&losses.total, "L_total")?,
                l_f: item_checked(&losses.l_f, "L_f")?,
                l_t: losses.l_t.as_ref().map(|t| item_checked(t, "L_t")).transpose()?,
                l_c: losses.l_c.as_ref().map(|t| item_checked(t, "L_c")).transpose()?,
            };
            losses.total.backward()?;
            adam.step(&trainable)?;
            for p in &all {
                p.tensor.zero_grad();
            }
            let w = chunk.len() as f64;
            sums[0] += w * rec.l_total;
            sums[1] += w * rec.l_f;
            if let Some(v) = rec.l_t {
                sums[2] += w * v;
                has[0] = true;
            }
            if let Some(v) = rec.l_c {
                sums[3] += w * v;
                has[1] = true;
            }
            trace.steps.push(rec);
            step += 1;
        }
        let n = train_windows.len() as f64;
        let val_l_f = if val_windows.is_empty() {
            None
        } else {
            Some(evaluate(model, val_windows, (n_endo, n_exo), batch_size, FutureExo::Observed)?.mae)
        };
        trace.epochs.push(EpochRecord {
            epoch,
            l_total: sums[0] / n,
            l_f: sums[1] / n,
            l_t: has[0].then(|| sums[2] / n),
            l_c: has[1].then(|| sums[3] / n),
            val_l_f,
        });
        log::debug!("epoch {epoch}: train L_f {:.6}, val L_f {val_l_f:?}", sums[1] / n);
        trace.best_epoch = epoch;
        if let Some(v) = val_l_f {
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, all.iter().map(|p| p.tensor.to_vec()).collect()));
                stale = 0;
            } else {
                stale += 1;
                if stale > cfg.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, snapshot)) = best {
        for (p, values) in all.iter().zip(&snapshot) {
            p.tensor.set_data(values)?;
        }
        let best_val = trace
            .epochs
            .iter()
            .filter_map(|e| e.val_l_f.map(|v| (e.epoch, v)))
            .fold((0, f64::INFINITY), |acc, (e, v)| if v < acc.1 { (e, v) } else { acc });
        trace.best_epoch = best_val.0;
    }
    Ok(trace)
}
