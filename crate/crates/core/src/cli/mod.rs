//! Command implementations behind the `dag` binary: `synth`, `train`, `eval`,
//! `predict`, `ablate` and `sweep`.
//!
//! Every command is deterministic under `--seed`. Failures print a single
//! line `error: kind=<kind> msg=<message>` to stderr and exit with a code
//! that depends on the kind (see [`exit_code`]).

pub mod config;

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::data::synth::gen_synthetic;
use crate::data::{format_f64, load_csv, norm, split, window, RawDataset, Split, WindowedSample};
use crate::error::{DagError, Result};
use crate::model::DagModel;
use crate::train::{
    evaluate, lookback_sweep, predict_windows, run_ablation, train_variant, write_metrics_csv, EvalReport, FutureExo,
    SweepRow,
};

pub use config::{parse_synthetic_spec, synthetic_spec_text, DataSource, KeyValues, RunConfig};

/// Reads the dataset a config points at.
pub fn load_dataset(cfg: &RunConfig) -> Result<RawDataset> {
    match &cfg.data {
        DataSource::Csv {
            path,
            endo_count,
            endo_names,
        } => {
            let ds = load_csv(path, *endo_count)?;
            if endo_names.is_empty() {
                Ok(ds)
            } else {
                let names: Vec<&str> = endo_names.iter().map(String::as_str).collect();
                ds.with_endo_names(&names)
            }
        }
        DataSource::Synthetic(spec) => gen_synthetic(spec),
    }
}

/// Loads the dataset and fixes the channel counts of the model config.
pub fn prepare(cfg: &mut RunConfig) -> Result<RawDataset> {
    let ds = load_dataset(cfg)?;
    cfg.experiment.model.n_endo = ds.endo_count;
    cfg.experiment.model.n_exo = ds.exo_count();
    cfg.experiment.model.validate()?;
    Ok(ds)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_reports(dir: &Path, stem: &str, reports: &[EvalReport]) -> Result<()> {
    write_file(&dir.join(format!("{stem}.csv")), |w| write_metrics_csv(w, reports))?;
    write_file(&dir.join(format!("{stem}.jsonl")), |w| {
        for r in reports {
            writeln!(w, "{}", r.json_line())?;
        }
        Ok(())
    })
}

/// Generates a synthetic dataset from a spec file and writes it as CSV.
pub fn cmd_synth(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<RawDataset> {
    let mut spec = parse_synthetic_spec(&fs::read_to_string(spec_path)?)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let ds = gen_synthetic(&spec)?;
    write_file(out, |w| ds.write_csv(w))?;
    Ok(ds)
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
    pub validation: Option<f64>,
}

/// Trains the configured variant; writes `model.ckpt` and `loss_trace.csv`
/// into the output directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let mut cfg = cfg.clone();
    let ds = prepare(&mut cfg)?;
    let e = &cfg.experiment;
    let data = crate::train::ExperimentData::new(&ds, e.split, e.model.lookback, e.model.horizon)?;
    let run = train_variant(&data, e, cfg.variant)?;
    log::info!("trained {} in {:.1}s", cfg.variant, run.wall_clock_secs);
    create_dir(&cfg.out)?;
    let checkpoint = cfg.out.join("model.ckpt");
    let trace = cfg.out.join("loss_trace.csv");
    Checkpoint {
        config: cfg.to_text(),
        records: run.model.state(),
    }
    .save(&checkpoint)?;
    write_file(&trace, |w| run.trace.write_csv(w))?;
    let validation = run
        .trace
        .epochs
        .iter()
        .find(|e| e.epoch == run.trace.best_epoch)
        .and_then(|e| e.val_l_f);
    Ok(TrainOutcome {
        checkpoint,
        trace,
        validation,
    })
}

/// Rebuilds the model stored in a checkpoint.
pub fn load_model(path: &Path) -> Result<(RunConfig, DagModel)> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = RunConfig::parse(&ckpt.config)?;
    let model = DagModel::new(cfg.experiment.model.clone())?.with_wiring(cfg.variant.wiring());
    model.load_state(&ckpt.records)?;
    Ok((cfg, model))
}

fn split_windows(cfg: &RunConfig, dataset: Option<&Path>, which: Split) -> Result<(RawDataset, Vec<WindowedSample>)> {
    let mut cfg = cfg.clone();
    if let Some(p) = dataset {
        let (endo_count, endo_names) = match &cfg.data {
            DataSource::Csv {
                endo_count, endo_names, ..
            } => (*endo_count, endo_names.clone()),
            DataSource::Synthetic(s) => (s.n_endo, Vec::new()),
        };
        cfg.data = DataSource::Csv {
            path: p.to_path_buf(),
            endo_count,
            endo_names,
        };
    }
    let ds = load_dataset(&cfg)?;
    let m = &cfg.experiment.model;
    if (ds.endo_count, ds.exo_count()) != (m.n_endo, m.n_exo) {
        return Err(DagError::contract(format!(
            "checkpoint expects {}+{} channels, dataset has {}+{}",
            m.n_exo,
            m.n_endo,
            ds.exo_count(),
            ds.endo_count
        )));
    }
    let ranges = split(ds.len, cfg.experiment.split)?;
    let windows = window(&ds, ranges.get(which), m.lookback, m.horizon);
    Ok((ds, windows))
}

fn split_name(which: Split) -> &'static str {
    match which {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

/// Scores a checkpoint on one split. With `out`, writes `metrics.csv` and
/// `metrics.jsonl` there.
pub fn cmd_eval(
    checkpoint: &Path,
    dataset: Option<&Path>,
    which: Split,
    mode: FutureExo,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let (cfg, model) = load_model(checkpoint)?;
    let (ds, windows) = split_windows(&cfg, dataset, which)?;
    let e = &cfg.experiment;
    let metrics = evaluate(
        &model,
        &windows,
        (ds.endo_count, ds.exo_count()),
        e.train.batch_size,
        mode,
    )?;
    let fingerprint = e.fingerprint();
    let report = EvalReport {
        run_id: fingerprint.clone(),
        variant: cfg.variant.name().to_string(),
        fingerprint,
        split: split_name(which).to_string(),
        future_exo: mode,
        metrics,
        train_l_total: None,
        train_l_f: None,
        train_l_t: None,
        train_l_c: None,
        wall_clock_secs: 0.0,
    };
    if let Some(dir) = out {
        write_reports(dir, "metrics", std::slice::from_ref(&report))?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Default)]
pub struct PredictOptions {
    /// Replace the future exogenous values by the model's own forecast.
    pub no_future_exo: bool,
    /// Future exogenous values from a `window,channel,step,value` CSV.
    pub future_exo: Option<PathBuf>,
    /// Also write the exogenous forecast in the same format.
    pub exo_forecast_out: Option<PathBuf>,
    /// Emit predictions z-scored with each window's lookback statistics.
    pub normalized: bool,
}

type LongRows = HashMap<(usize, String, usize), f64>;

fn read_long_csv(path: &Path) -> Result<LongRows> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_error)?;
    let mut rows = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = i + 2;
        let field = |k: usize| {
            rec.get(k).ok_or_else(|| DagError::Parse {
                line,
                msg: "expected window,channel,step,value".into(),
            })
        };
        let num = |s: &str| {
            s.trim().parse::<f64>().map_err(|_| DagError::Parse {
                line,
                msg: format!("non-numeric value `{s}`"),
            })
        };
        let idx = |s: &str| {
            s.trim().parse::<usize>().map_err(|_| DagError::Parse {
                line,
                msg: format!("invalid index `{s}`"),
            })
        };
        rows.insert(
            (idx(field(0)?)?, field(1)?.trim().to_string(), idx(field(2)?)?),
            num(field(3)?)?,
        );
    }
    Ok(rows)
}

fn csv_error(e: csv::Error) -> DagError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DagError::Io(io),
        other => DagError::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn write_long_csv<W: Write>(w: &mut W, names: &[String], per_window: &[Vec<f64>], steps: usize) -> Result<()> {
    writeln!(w, "window,channel,step,value")?;
    for (k, values) in per_window.iter().enumerate() {
        for (c, name) in names.iter().enumerate() {
            for s in 0..steps {
                writeln!(w, "{k},{name},{s},{}", format_f64(values[c * steps + s]))?;
            }
        }
    }
    Ok(())
}

/// Endogenous predictions for every window of a split, written as
/// `window,channel,step,value`.
pub fn cmd_predict(
    checkpoint: &Path,
    dataset: Option<&Path>,
    which: Split,
    opts: &PredictOptions,
    out: &Path,
) -> Result<Vec<Vec<f64>>> {
    let (cfg, model) = load_model(checkpoint)?;
    let (ds, mut windows) = split_windows(&cfg, dataset, which)?;
    let (n, d) = (ds.endo_count, ds.exo_count());
    let f = cfg.experiment.model.horizon;
    let bs = cfg.experiment.train.batch_size;
    let exo_names = ds.names[..d].to_vec();
    let endo_names = ds.names[d..].to_vec();

    if let Some(path) = &opts.exo_forecast_out {
        let mut forecasts = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(bs) {
            let refs: Vec<&WindowedSample> = chunk.iter().collect();
            let batch = crate::data::Batch::from_samples(&refs, n, d)?;
            let y = model.forecast_exo(&batch)?;
            forecasts.extend(y.chunks(d * f).map(<[f64]>::to_vec));
        }
        write_file(path, |w| write_long_csv(w, &exo_names, &forecasts, f))?;
    }
    if let Some(path) = &opts.future_exo {
        if opts.no_future_exo {
            return Err(DagError::config("--future-exo", "conflicts with --no-future-exo"));
        }
        let rows = read_long_csv(path)?;
        for (k, w) in windows.iter_mut().enumerate() {
            for (c, name) in exo_names.iter().enumerate() {
                for s in 0..f {
                    w.y_exo[c * f + s] = *rows.get(&(k, name.clone(), s)).ok_or_else(|| DagError::Parse {
                        line: 0,
                        msg: format!("missing future value for window {k}, channel {name}, step {s}"),
                    })?;
                }
            }
        }
    }
    let mode = if opts.no_future_exo {
        FutureExo::Forecast
    } else {
        FutureExo::Observed
    };
    let mut preds = predict_windows(&model, &windows, n, d, bs, mode)?;
    if opts.normalized {
        for (p, w) in preds.iter_mut().zip(&windows) {
            let stats = norm::normalize_stats(&w.x_endo, cfg.experiment.model.lookback);
            *p = norm::apply(p, &stats);
        }
    }
    write_file(out, |w| write_long_csv(w, &endo_names, &preds, f))?;
    Ok(preds)
}

/// Trains and evaluates the six ablation variants; writes `ablation.csv`
/// and `ablation.jsonl`.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let mut cfg = cfg.clone();
    let ds = prepare(&mut cfg)?;
    let e = &cfg.experiment;
    let data = crate::train::ExperimentData::new(&ds, e.split, e.model.lookback, e.model.horizon)?;
    let reports = run_ablation(&data, e)?;
    write_reports(&cfg.out, "ablation", &reports)?;
    Ok(reports)
}

/// One full-model run per lookback; writes `sweep.csv` (summary) and
/// `sweep_metrics.csv` / `.jsonl`.
pub fn cmd_sweep(cfg: &RunConfig, lookbacks: &[usize]) -> Result<Vec<SweepRow>> {
    if lookbacks.is_empty() {
        return Err(DagError::config("--lookbacks", "no lookbacks given"));
    }
    let mut cfg = cfg.clone();
    let ds = prepare(&mut cfg)?;
    let rows = lookback_sweep(&ds, &cfg.experiment, lookbacks)?;
    write_file(&cfg.out.join("sweep.csv"), |w| {
        writeln!(w, "lookback,mse,mae,status")?;
        for r in &rows {
            match (&r.report, &r.skipped) {
                (Some(rep), _) => writeln!(
                    w,
                    "{},{},{},ok",
                    r.lookback,
                    format_f64(rep.metrics.mse),
                    format_f64(rep.metrics.mae)
                )?,
                (None, reason) => writeln!(
                    w,
                    "{},,,skipped: {}",
                    r.lookback,
                    reason.as_deref().unwrap_or("").replace(',', ";")
                )?,
            }
        }
        Ok(())
    })?;
    let reports: Vec<EvalReport> = rows.iter().filter_map(|r| r.report.clone()).collect();
    write_reports(&cfg.out, "sweep_metrics", &reports)?;
    Ok(rows)
}

#[derive(Parser, Debug)]
#[command(
    name = "dag",
    version,
    about = "Dual causal attention forecasting with exogenous variables"
)]
pub struct Cli {
    /// Seed for every random choice (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (file for `synth` and `predict`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Fusion weight of the temporal-injection forecast.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the causality losses.
    #[arg(long)]
    pub lambda2: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset from a spec file.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a model; writes model.ckpt and loss_trace.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a checkpoint on a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV (defaults to the one in the checkpoint's config).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        no_future_exo: bool,
    },
    /// Write endogenous forecasts as window,channel,step,value.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Use the model's exogenous forecast instead of observed future values.
        #[arg(long)]
        no_future_exo: bool,
        /// Future exogenous values (window,channel,step,value CSV).
        #[arg(long)]
        future_exo: Option<PathBuf>,
        /// Also write the exogenous forecast to this CSV.
        #[arg(long)]
        exo_forecast_out: Option<PathBuf>,
        /// Emit predictions in the normalized space (debugging).
        #[arg(long)]
        normalized: bool,
    },
    /// Train and evaluate the six ablation variants.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and evaluate one model per lookback.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated lookbacks.
        #[arg(long, value_delimiter = ',', default_value = "48,96,192,336,720")]
        lookbacks: Vec<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Exit status for an error kind.
pub fn exit_code(err: &DagError) -> i32 {
    match err {
        DagError::Io(_) => 3,
        DagError::Config { .. } | DagError::Spec(_) => 4,
        DagError::Parse { .. } => 5,
        DagError::Checkpoint(_) => 6,
        _ => 1,
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn load_run_config(path: &Path, cli: &Cli, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(l1) = overrides.lambda1 {
        cfg.experiment.model.lambda1 = l1;
    }
    if let Some(l2) = overrides.lambda2 {
        cfg.experiment.model.lambda2 = l2;
    }
    cfg.experiment.model.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::Synth { config } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("synthetic.csv"));
            let ds = cmd_synth(config, &out, cli.seed)?;
            writeln!(
                stdout,
                "wrote {} ({} channels x {} steps)",
                out.display(),
                ds.channels,
                ds.len
            )?;
        }
        Command::Train { config, overrides } => {
            let cfg = load_run_config(config, cli, overrides)?;
            let o = cmd_train(&cfg)?;
            let val = o.validation.map(format_f64).unwrap_or_else(|| "none".into());
            writeln!(
                stdout,
                "checkpoint={} trace={} val_l_f={val}",
                o.checkpoint.display(),
                o.trace.display()
            )?;
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            no_future_exo,
        } => {
            let mode = if *no_future_exo {
                FutureExo::Forecast
            } else {
                FutureExo::Observed
            };
            let r = cmd_eval(checkpoint, data.as_deref(), *split, mode, cli.out.as_deref())?;
            writeln!(stdout, "{}", r.json_line())?;
        }
        Command::Predict {
            checkpoint,
            data,
            split,
            no_future_exo,
            future_exo,
            exo_forecast_out,
            normalized,
        } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("predictions.csv"));
            let opts = PredictOptions {
                no_future_exo: *no_future_exo,
                future_exo: future_exo.clone(),
                exo_forecast_out: exo_forecast_out.clone(),
                normalized: *normalized,
            };
            let preds = cmd_predict(checkpoint, data.as_deref(), *split, &opts, &out)?;
            writeln!(stdout, "wrote {} ({} windows)", out.display(), preds.len())?;
        }
        Command::Ablate { config, overrides } => {
            let cfg = load_run_config(config, cli, overrides)?;
            let reports = cmd_ablate(&cfg)?;
            writeln!(stdout, "{:<16} {:>12} {:>12}", "variant", "mse", "mae")?;
            for r in &reports {
                writeln!(
                    stdout,
                    "{:<16} {:>12.6} {:>12.6}",
                    r.variant, r.metrics.mse, r.metrics.mae
                )?;
            }
        }
        Command::Sweep {
            config,
            lookbacks,
            overrides,
        } => {
            let cfg = load_run_config(config, cli, overrides)?;
            let rows = cmd_sweep(&cfg, lookbacks)?;
            writeln!(stdout, "{:>8} {:>12} {:>12}", "lookback", "mse", "mae")?;
            for r in &rows {
                match &r.report {
                    Some(rep) => writeln!(
                        stdout,
                        "{:>8} {:>12.6} {:>12.6}",
                        r.lookback, rep.metrics.mse, rep.metrics.mae
                    )?,
                    None => writeln!(
                        stdout,
                        "{:>8} skipped: {}",
                        r.lookback,
                        r.skipped.as_deref().unwrap_or("")
                    )?,
                }
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            eprintln!("error: kind=usage msg={}", one_line(&e.to_string()));
            return 2;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: kind={} msg={}", e.kind(), one_line(&e.to_string()));
            exit_code(&e)
        }
    }
}
