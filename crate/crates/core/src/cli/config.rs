//! Flat `key=value` run configuration with dotted keys.
//!
//! ```text
//! # dataset: a CSV file or a synthetic spec
//! data.path = data/weather.csv
//! data.endo_count = 1
//! data.split = 7:1:2
//! model.lookback = 96
//! model.horizon = 24
//! model.lambda1 = 0.5
//! train.epochs = 20
//! out = runs/weather
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::format_f64;
use crate::data::synth::SyntheticSpec;
use crate::error::{DagError, Result};
use crate::model::DagConfig;
use crate::train::{AblationVariant, ExperimentConfig, TrainConfig};

/// Raw key/value pairs in file order, consumed by typed getters.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DagError::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(DagError::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(DagError::config(key, "given more than once"));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| DagError::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| DagError::config(key, format!("cannot parse `{s}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn with_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_keys().next() {
            Some(k) => Err(DagError::config(k, "unknown key")),
            None => Ok(()),
        }
    }
}

fn parse_ratios(key: &str, v: &str) -> Result<[u32; 3]> {
    let parts: Vec<u32> = v
        .split(':')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| DagError::config(key, format!("cannot parse `{v}`")))
        })
        .collect::<Result<_>>()?;
    <[u32; 3]>::try_from(parts).map_err(|_| DagError::config(key, "expected three ratios like 7:1:2"))
}

/// Where the series come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        endo_count: usize,
        /// Explicit endogenous channels by name, moved to the end.
        endo_names: Vec<String>,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub experiment: ExperimentConfig,
    pub variant: AblationVariant,
    pub out: PathBuf,
}

/// Reads `synth.*` keys; unset fields follow [`SyntheticSpec::planted`].
fn synthetic_from(kv: &mut KeyValues) -> Result<SyntheticSpec> {
    let n_exo = kv.take("synth.n_exo")?.unwrap_or(4);
    let n_endo = kv.take("synth.n_endo")?.unwrap_or(1);
    let len = kv.take("synth.len")?.unwrap_or(5000);
    let seed = kv.take("synth.seed")?.unwrap_or(0);
    let mut spec = SyntheticSpec::planted(n_exo, n_endo, len, seed);
    if let Some(ar) = kv.take_str("synth.ar") {
        spec.ar = ar
            .split(',')
            .map(|pair| {
                let (a, b) = pair
                    .split_once(':')
                    .ok_or_else(|| DagError::config("synth.ar", "expected `phi1:phi2` pairs"))?;
                let p = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| DagError::config("synth.ar", format!("cannot parse `{s}`")))
                };
                Ok((p(a)?, p(b)?))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(mix) = kv.take_list("synth.mix")? {
        spec.mix = mix;
    }
    kv.take_into("synth.season_period", &mut spec.season_period)?;
    kv.take_into("synth.season_amplitude", &mut spec.season_amplitude)?;
    kv.take_into("synth.rho", &mut spec.rho)?;
    kv.take_into("synth.sigma_exo", &mut spec.sigma_exo)?;
    kv.take_into("synth.sigma_endo", &mut spec.sigma_endo)?;
    kv.take_into("synth.burn_in", &mut spec.burn_in)?;
    spec.validate()?;
    Ok(spec)
}

fn write_synthetic(out: &mut String, s: &SyntheticSpec) {
    let list = |v: &[f64]| v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(",");
    let ar =
        s.ar.iter()
            .map(|(a, b)| format!("{}:{}", format_f64(*a), format_f64(*b)))
            .collect::<Vec<_>>()
            .join(",");
    let _ = writeln!(out, "synth.n_exo = {}", s.n_exo);
    let _ = writeln!(out, "synth.n_endo = {}", s.n_endo);
    let _ = writeln!(out, "synth.len = {}", s.len);
    let _ = writeln!(out, "synth.seed = {}", s.seed);
    let _ = writeln!(out, "synth.ar = {ar}");
    let _ = writeln!(out, "synth.mix = {}", list(&s.mix));
    let _ = writeln!(out, "synth.season_period = {}", format_f64(s.season_period));
    let _ = writeln!(out, "synth.season_amplitude = {}", format_f64(s.season_amplitude));
    let _ = writeln!(out, "synth.rho = {}", format_f64(s.rho));
    let _ = writeln!(out, "synth.sigma_exo = {}", format_f64(s.sigma_exo));
    let _ = writeln!(out, "synth.sigma_endo = {}", format_f64(s.sigma_endo));
    let _ = writeln!(out, "synth.burn_in = {}", s.burn_in);
}

/// Parses a standalone synthetic spec file (`synth.*` keys only).
pub fn parse_synthetic_spec(text: &str) -> Result<SyntheticSpec> {
    let mut kv = KeyValues::parse(text)?;
    let spec = synthetic_from(&mut kv)?;
    kv.finish()?;
    Ok(spec)
}

pub fn synthetic_spec_text(spec: &SyntheticSpec) -> String {
    let mut s = String::new();
    write_synthetic(&mut s, spec);
    s
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        // relative dataset paths are resolved against the config file
        if let DataSource::Csv { path: data, .. } = &mut cfg.data {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(KeyValues::parse(text)?)
    }

    pub fn from_kv(mut kv: KeyValues) -> Result<Self> {
        let split = match kv.take_str("data.split") {
            Some(v) => parse_ratios("data.split", &v)?,
            None => [7, 1, 2],
        };
        let data = match kv.take_str("data.path") {
            Some(path) => {
                if kv.with_prefix("synth.") {
                    return Err(DagError::config(
                        "data.path",
                        "give either data.path or synth.* keys, not both",
                    ));
                }
                let endo_names: Vec<String> = kv.take_list("data.endo_names")?.unwrap_or_default();
                let endo_count = kv.take("data.endo_count")?.unwrap_or(endo_names.len().max(1));
                if !endo_names.is_empty() && endo_names.len() != endo_count {
                    return Err(DagError::config("data.endo_count", "disagrees with data.endo_names"));
                }
                DataSource::Csv {
                    path: PathBuf::from(path),
                    endo_count,
                    endo_names,
                }
            }
            None => DataSource::Synthetic(synthetic_from(&mut kv)?),
        };
        let (n_endo, n_exo) = match &data {
            DataSource::Synthetic(s) => (s.n_endo, s.n_exo),
            // filled in once the file is read
            DataSource::Csv { endo_count, .. } => (*endo_count, kv.take("model.n_exo")?.unwrap_or(1)),
        };
        let lookback = kv.take("model.lookback")?.unwrap_or(96);
        let horizon = kv.take("model.horizon")?.unwrap_or(24);
        let mut m = DagConfig::new(n_endo, n_exo, lookback, horizon);
        if let Some(d) = kv.take("model.d_model")? {
            m = m.with_d_model(d);
        }
        if let Some(n) = kv.take::<usize>("model.n_endo")? {
            if n != n_endo {
                return Err(DagError::config(
                    "model.n_endo",
                    format!("dataset has {n_endo} endogenous channels"),
                ));
            }
        }
        if matches!(data, DataSource::Synthetic(_)) {
            if let Some(d) = kv.take::<usize>("model.n_exo")? {
                if d != n_exo {
                    return Err(DagError::config(
                        "model.n_exo",
                        format!("dataset has {n_exo} exogenous channels"),
                    ));
                }
            }
        }
        m.patch_len = m.patch_len.min(lookback);
        kv.take_into("model.patch_len", &mut m.patch_len)?;
        m.stride = m.patch_len;
        kv.take_into("model.stride", &mut m.stride)?;
        kv.take_into("model.layers", &mut m.layers)?;
        kv.take_into("model.heads", &mut m.heads)?;
        kv.take_into("model.ff_hidden", &mut m.ff_hidden)?;
        kv.take_into("model.gate_hidden", &mut m.gate_hidden)?;
        kv.take_into("model.lambda1", &mut m.lambda1)?;
        kv.take_into("model.lambda2", &mut m.lambda2)?;
        kv.take_into("model.double_softmax", &mut m.double_softmax)?;
        kv.take_into("model.normalize", &mut m.normalize)?;
        kv.take_into("model.seed", &mut m.seed)?;
        m.validate()?;

        let mut t = TrainConfig::default();
        kv.take_into("train.epochs", &mut t.epochs)?;
        kv.take_into("train.batch_size", &mut t.batch_size)?;
        kv.take_into("train.lr", &mut t.adam.lr)?;
        kv.take_into("train.beta1", &mut t.adam.beta1)?;
        kv.take_into("train.beta2", &mut t.adam.beta2)?;
        kv.take_into("train.eps", &mut t.adam.eps)?;
        kv.take_into("train.patience", &mut t.patience)?;
        kv.take_into("train.seed", &mut t.seed)?;
        kv.take_into("train.min_batch_size", &mut t.min_batch_size)?;
        t.memory_budget = kv.take("train.memory_budget")?;
        t.validate()?;

        let variant = match kv.take_str("variant") {
            Some(v) => v.parse()?,
            None => AblationVariant::Full,
        };
        let out = kv
            .take_str("out")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        kv.finish()?;
        Ok(RunConfig {
            data,
            experiment: ExperimentConfig {
                model: m,
                train: t,
                split,
            },
            variant,
            out,
        })
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = &self.experiment;
        match &self.data {
            DataSource::Csv {
                path,
                endo_count,
                endo_names,
            } => {
                let _ = writeln!(s, "data.path = {}", path.display());
                let _ = writeln!(s, "data.endo_count = {endo_count}");
                if !endo_names.is_empty() {
                    let _ = writeln!(s, "data.endo_names = {}", endo_names.join(","));
                }
                let _ = writeln!(s, "model.n_exo = {}", e.model.n_exo);
            }
            DataSource::Synthetic(spec) => write_synthetic(&mut s, spec),
        }
        let _ = writeln!(s, "data.split = {}:{}:{}", e.split[0], e.split[1], e.split[2]);
        let m = &e.model;
        let _ = writeln!(s, "model.lookback = {}", m.lookback);
        let _ = writeln!(s, "model.horizon = {}", m.horizon);
        let _ = writeln!(s, "model.d_model = {}", m.d_model);
        let _ = writeln!(s, "model.patch_len = {}", m.patch_len);
        let _ = writeln!(s, "model.stride = {}", m.stride);
        let _ = writeln!(s, "model.layers = {}", m.layers);
        let _ = writeln!(s, "model.heads = {}", m.heads);
        let _ = writeln!(s, "model.ff_hidden = {}", m.ff_hidden);
        let _ = writeln!(s, "model.gate_hidden = {}", m.gate_hidden);
        let _ = writeln!(s, "model.lambda1 = {}", format_f64(m.lambda1));
        let _ = writeln!(s, "model.lambda2 = {}", format_f64(m.lambda2));
        let _ = writeln!(s, "model.double_softmax = {}", m.double_softmax);
        let _ = writeln!(s, "model.normalize = {}", m.normalize);
        let _ = writeln!(s, "model.seed = {}", m.seed);
        let t = &e.train;
        let _ = writeln!(s, "train.epochs = {}", t.epochs);
        let _ = writeln!(s, "train.batch_size = {}", t.batch_size);
        let _ = writeln!(s, "train.lr = {}", format_f64(t.adam.lr));
        let _ = writeln!(s, "train.beta1 = {}", format_f64(t.adam.beta1));
        let _ = writeln!(s, "train.beta2 = {}", format_f64(t.adam.beta2));
        let _ = writeln!(s, "train.eps = {}", format_f64(t.adam.eps));
        let _ = writeln!(s, "train.patience = {}", t.patience);
        let _ = writeln!(s, "train.seed = {}", t.seed);
        let _ = writeln!(s, "train.min_batch_size = {}", t.min_batch_size);
        if let Some(b) = t.memory_budget {
            let _ = writeln!(s, "train.memory_budget = {b}");
        }
        let _ = writeln!(s, "variant = {}", self.variant.name());
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }

    /// Sets every seed: initialisation, shuffling and, for synthetic data,
    /// the generator.
    pub fn set_seed(&mut self, seed: u64) {
        self.experiment.model.seed = seed;
        self.experiment.train.seed = seed;
        if let DataSource::Synthetic(spec) = &mut self.data {
            spec.seed = seed;
        }
    }
}
