//! End-to-end runs: prepare windows, train a wiring variant or the baseline,
//! evaluate on the test split.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{evaluate, train, EvalReport, Forecaster, FutureExo, LossTrace, MlpFusion, TrainConfig};
use crate::data::{split, window, RawDataset, WindowedSample};
use crate::error::{DagError, Result};
use crate::model::{AlphaModeSerde, DagConfig, DagModel, Wiring};

/// The six wirings of the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    /// (a) temporal injection network alone, own attention only.
    G2Only,
    /// (b) channel injection network alone, own attention only.
    G4Only,
    /// (c) both injection networks, own attention only, no causality losses.
    G2PlusG4,
    /// (d) temporal discovery + injection with `L_t`.
    F1G2Temporal,
    /// (e) channel discovery + injection with `L_c`.
    F3G4Channel,
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::G2Only,
        AblationVariant::G4Only,
        AblationVariant::G2PlusG4,
        AblationVariant::F1G2Temporal,
        AblationVariant::F3G4Channel,
        AblationVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::G2Only => "G2_only",
            AblationVariant::G4Only => "G4_only",
            AblationVariant::G2PlusG4 => "G2_plus_G4",
            AblationVariant::F1G2Temporal => "F1_G2_temporal",
            AblationVariant::F3G4Channel => "F3_G4_channel",
            AblationVariant::Full => "full",
        }
    }

    /// Variants without causal injection keep the causal blocks but pin
    /// alpha to 1, so parameter shapes match the full model.
    pub fn wiring(self) -> Wiring {
        let own = AlphaModeSerde::Fixed(1.0);
        let off = Wiring {
            temporal_injection: false,
            channel_injection: false,
            temporal_discovery: false,
            channel_discovery: false,
            temporal_alpha: own,
            channel_alpha: own,
            lambda1: None,
        };
        match self {
            AblationVariant::G2Only => Wiring {
                temporal_injection: true,
                lambda1: Some(1.0),
                ..off
            },
            AblationVariant::G4Only => Wiring {
                channel_injection: true,
                lambda1: Some(0.0),
                ..off
            },
            AblationVariant::G2PlusG4 => Wiring {
                temporal_injection: true,
                channel_injection: true,
                ..off
            },
            AblationVariant::F1G2Temporal => Wiring {
                temporal_injection: true,
                temporal_discovery: true,
                temporal_alpha: AlphaModeSerde::Gated,
                lambda1: Some(1.0),
                ..off
            },
            AblationVariant::F3G4Channel => Wiring {
                channel_injection: true,
                channel_discovery: true,
                channel_alpha: AlphaModeSerde::Gated,
                lambda1: Some(0.0),
                ..off
            },
            AblationVariant::Full => Wiring::default(),
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = DagError;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        let short = ["a", "b", "c", "d", "e", "full"];
        AblationVariant::ALL
            .iter()
            .zip(short)
            .find(|(v, k)| v.name().to_ascii_lowercase() == key || *k == key)
            .map(|(v, _)| *v)
            .ok_or_else(|| DagError::config("variant", format!("unknown variant `{s}`")))
    }
}

/// Everything that determines a run besides the dataset and the variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: DagConfig,
    pub train: TrainConfig,
    pub split: [u32; 3],
}

impl ExperimentConfig {
    pub fn new(model: DagConfig) -> Self {
        ExperimentConfig {
            model,
            train: TrainConfig::default(),
            split: [7, 1, 2],
        }
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Windows of the three chronological splits.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub n_endo: usize,
    pub n_exo: usize,
    pub train: Vec<WindowedSample>,
    pub val: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
}

impl ExperimentData {
    pub fn new(ds: &RawDataset, ratios: [u32; 3], lookback: usize, horizon: usize) -> Result<Self> {
        let ranges = split(ds.len, ratios)?;
        Ok(ExperimentData {
            n_endo: ds.endo_count,
            n_exo: ds.exo_count(),
            train: window(ds, ranges.train, lookback, horizon),
            val: window(ds, ranges.val, lookback, horizon),
            test: window(ds, ranges.test, lookback, horizon),
        })
    }

    fn channels(&self) -> (usize, usize) {
        (self.n_endo, self.n_exo)
    }
}

pub struct TrainedRun<M> {
    pub model: M,
    pub trace: LossTrace,
    pub wall_clock_secs: f64,
}

fn check_channels(data: &ExperimentData, cfg: &DagConfig) -> Result<()> {
    if (data.n_endo, data.n_exo) != (cfg.n_endo, cfg.n_exo) {
        return Err(DagError::config(
            "model.n_endo",
            format!(
                "config expects {}+{} channels, dataset has {}+{}",
                cfg.n_exo, cfg.n_endo, data.n_exo, data.n_endo
            ),
        ));
    }
    Ok(())
}

pub fn train_variant(
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    variant: AblationVariant,
) -> Result<TrainedRun<DagModel>> {
    check_channels(data, &cfg.model)?;
    let start = Instant::now();
    let model = DagModel::new(cfg.model.clone())?.with_wiring(variant.wiring());
    let trace = train(&model, &data.train, &data.val, data.n_endo, data.n_exo, &cfg.train)?;
    Ok(TrainedRun {
        model,
        trace,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn train_baseline(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<TrainedRun<MlpFusion>> {
    check_channels(data, &cfg.model)?;
    let start = Instant::now();
    let model = MlpFusion::new(&cfg.model)?;
    let trace = train(&model, &data.train, &data.val, data.n_endo, data.n_exo, &cfg.train)?;
    Ok(TrainedRun {
        model,
        trace,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Test-split report for a trained model.
pub fn report<M: Forecaster + ?Sized>(
    run: (&M, &LossTrace, f64),
    data: &ExperimentData,
    cfg: &ExperimentConfig,
    variant: &str,
    mode: FutureExo,
) -> Result<EvalReport> {
    let (model, trace, secs) = run;
    let start = Instant::now();
    let metrics = evaluate(model, &data.test, data.channels(), cfg.train.batch_size, mode)?;
    let last = trace.last_epoch();
    let fingerprint = cfg.fingerprint();
    Ok(EvalReport {
        run_id: fingerprint.clone(),
        variant: variant.to_string(),
        fingerprint,
        split: "test".into(),
        future_exo: mode,
        metrics,
        train_l_total: last.map(|e| e.l_total),
        train_l_f: last.map(|e| e.l_f),
        train_l_t: last.and_then(|e| e.l_t),
        train_l_c: last.and_then(|e| e.l_c),
        wall_clock_secs: secs + start.elapsed().as_secs_f64(),
    })
}

pub fn run_variant(data: &ExperimentData, cfg: &ExperimentConfig, variant: AblationVariant) -> Result<EvalReport> {
    let run = train_variant(data, cfg, variant)?;
    report(
        (&run.model, &run.trace, run.wall_clock_secs),
        data,
        cfg,
        variant.name(),
        FutureExo::Observed,
    )
}

/// Trains and evaluates all six variants with identical seeds and configs.
pub fn run_ablation(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<Vec<EvalReport>> {
    AblationVariant::ALL
        .iter()
        .map(|&v| run_variant(data, cfg, v))
        .collect()
}

pub fn run_baseline_mlp_fusion(data: &ExperimentData, cfg: &ExperimentConfig) -> Result<EvalReport> {
    let run = train_baseline(data, cfg)?;
    report(
        (&run.model, &run.trace, run.wall_clock_secs),
        data,
        cfg,
        "mlp_fusion",
        FutureExo::Observed,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lookback: usize,
    pub report: Option<EvalReport>,
    pub skipped: Option<String>,
}

/// One full-model run per lookback with otherwise identical settings. A
/// lookback that leaves a split without windows yields a skipped row.
pub fn lookback_sweep(ds: &RawDataset, cfg: &ExperimentConfig, lookbacks: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(lookbacks.len());
    for &lookback in lookbacks {
        let mut run_cfg = cfg.clone();
        run_cfg.model.lookback = lookback;
        run_cfg.model.patch_len = cfg.model.patch_len.min(lookback);
        run_cfg.model.stride = cfg.model.stride.min(run_cfg.model.patch_len);
        let data = ExperimentData::new(ds, cfg.split, lookback, cfg.model.horizon)?;
        let empty = [("train", &data.train), ("val", &data.val), ("test", &data.test)]
            .into_iter()
            .find(|(_, w)| w.is_empty());
        if let Some((name, _)) = empty {
            let reason = format!("lookback {lookback} leaves the {name} split without windows");
            log::warn!("{reason}");
            rows.push(SweepRow {
                lookback,
                report: None,
                skipped: Some(reason),
            });
            continue;
        }
        let mut report = run_variant(&data, &run_cfg, AblationVariant::Full)?;
        report.variant = format!("lookback_{lookback}");
        rows.push(SweepRow {
            lookback,
            report: Some(report),
            skipped: None,
        });
    }
    Ok(rows)
}
