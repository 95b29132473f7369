//! Dataset ingestion, chronological splits, sliding windows and batching.
//!
//! Channels are stored channel-major (`[C × L]`). The last `endo_count`
//! channels are endogenous; the rest are exogenous.

pub mod norm;
pub mod synth;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DagError, Result};

pub use synth::{gen_synthetic, SyntheticSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub values: Vec<f64>,
    pub channels: usize,
    pub len: usize,
    pub names: Vec<String>,
    pub endo_count: usize,
    pub metadata: BTreeMap<String, String>,
}

impl RawDataset {
    pub fn new(
        values: Vec<f64>,
        channels: usize,
        len: usize,
        names: Vec<String>,
        endo_count: usize,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if len == 0 || values.len() != channels * len || names.len() != channels {
            return Err(DagError::dim("dataset", &[channels, len], &[values.len(), names.len()]));
        }
        if endo_count == 0 || endo_count >= channels {
            return Err(DagError::contract(format!(
                "endogenous count {endo_count} must be in [1, {channels})"
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(DagError::Numeric {
                op: "dataset",
                msg: format!("non-finite value in channel {} at step {}", pos / len, pos % len),
            });
        }
        Ok(RawDataset {
            values,
            channels,
            len,
            names,
            endo_count,
            metadata,
        })
    }

    pub fn exo_count(&self) -> usize {
        self.channels - self.endo_count
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.len..(c + 1) * self.len]
    }

    /// Moves the named channels to the end (in the given order) and marks
    /// them endogenous.
    pub fn with_endo_names(&self, endo: &[&str]) -> Result<Self> {
        let mut order: Vec<usize> = Vec::new();
        let mut tail = Vec::new();
        for name in endo {
            let idx = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| DagError::contract(format!("unknown channel `{name}`")))?;
            tail.push(idx);
        }
        order.extend((0..self.channels).filter(|c| !tail.contains(c)));
        order.extend(&tail);
        let values = order.iter().flat_map(|&c| self.channel(c).to_vec()).collect();
        let names = order.iter().map(|&c| self.names[c].clone()).collect();
        RawDataset::new(
            values,
            self.channels,
            self.len,
            names,
            endo.len(),
            self.metadata.clone(),
        )
    }

    /// Writes a header row of channel names followed by one row per step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.names).map_err(csv_io)?;
        for t in 0..self.len {
            let row: Vec<String> = (0..self.channels)
                .map(|c| format_f64(self.values[c * self.len + t]))
                .collect();
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> DagError {
    DagError::Io(std::io::Error::other(e.to_string()))
}

/// Shortest decimal that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn load_csv(path: impl AsRef<Path>, endo_count: usize) -> Result<RawDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut ds = read_csv(file, endo_count)?;
    ds.metadata.insert("path".into(), path.as_ref().display().to_string());
    Ok(ds)
}

/// Parses a rectangular numeric table. An optional header row and an
/// optional leading timestamp column are detected from the first rows.
pub fn read_csv<R: Read>(input: R, endo_count: usize) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| DagError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(rows.len() + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    let (_, first) = rows.first().ok_or(DagError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;

    let numeric_from = |r: &[String], k: usize| r.iter().skip(k).all(|f| parse_number(f).is_some());
    let (has_header, has_ts) = if numeric_from(first, 0) {
        (false, false)
    } else if first.len() > 1 && numeric_from(first, 1) {
        (false, true)
    } else {
        let ts = rows.get(1).map(|(_, r)| parse_number(&r[0]).is_none()).unwrap_or(false);
        (true, ts)
    };

    let width = first.len();
    let skip = usize::from(has_ts);
    let channels = width - skip;
    if channels == 0 {
        return Err(DagError::Parse {
            line: rows[0].0,
            msg: "no data columns".into(),
        });
    }
    let names: Vec<String> = if has_header {
        first[skip..].to_vec()
    } else {
        (0..channels).map(|c| format!("ch{c}")).collect()
    };

    let body = &rows[usize::from(has_header)..];
    let len = body.len();
    let mut values = vec![0.0; channels * len];
    for (t, (line, rec)) in body.iter().enumerate() {
        if rec.len() != width {
            return Err(DagError::Parse {
                line: *line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        for (c, field) in rec[skip..].iter().enumerate() {
            values[c * len + t] = parse_number(field).ok_or_else(|| DagError::Parse {
                line: *line,
                msg: format!("non-numeric or missing value `{field}` in column {}", c + skip + 1),
            })?;
        }
    }
    if len == 0 {
        return Err(DagError::Parse {
            line: rows[0].0,
            msg: "no data rows".into(),
        });
    }
    if endo_count == 0 || endo_count >= channels {
        return Err(DagError::contract(format!(
            "endogenous count {endo_count} must be in [1, {channels})"
        )));
    }
    RawDataset::new(values, channels, len, names, endo_count, BTreeMap::new())
}

/// Train / validation / test step ranges.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn get(&self, which: Split) -> Range<usize> {
        match which {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = DagError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DagError::config("split", format!("unknown split `{other}`"))),
        }
    }
}

/// Contiguous chronological split with boundaries at `floor(L·cumulative/total)`.
pub fn split(len: usize, ratios: [u32; 3]) -> Result<SplitRanges> {
    if ratios.contains(&0) {
        return Err(DagError::contract(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    let total: u64 = ratios.iter().map(|&r| r as u64).sum();
    let b1 = (len as u64 * ratios[0] as u64 / total) as usize;
    let b2 = (len as u64 * (ratios[0] + ratios[1]) as u64 / total) as usize;
    let out = SplitRanges {
        train: 0..b1,
        val: b1..b2,
        test: b2..len,
    };
    if out.train.is_empty() || out.val.is_empty() || out.test.is_empty() {
        return Err(DagError::contract(format!(
            "split {ratios:?} of length {len} leaves an empty segment"
        )));
    }
    Ok(out)
}

/// One aligned sample. Buffers are channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSample {
    pub origin: usize,
    pub x_endo: Vec<f64>,
    pub x_exo: Vec<f64>,
    pub y_endo: Vec<f64>,
    pub y_exo: Vec<f64>,
}

/// Number of windows of lookback `t` and horizon `f` inside a range.
pub fn window_count(range_len: usize, t: usize, f: usize) -> usize {
    (range_len + 1).saturating_sub(t + f)
}

/// Every window whose lookback and horizon both lie in `range`, one per
/// origin. Nothing is dropped at the end.
pub fn window(ds: &RawDataset, range: Range<usize>, t: usize, f: usize) -> Vec<WindowedSample> {
    let count = window_count(range.len(), t, f);
    if count == 0 {
        log::warn!(
            "range {range:?} (len {}) is shorter than lookback {t} + horizon {f}; no windows",
            range.len()
        );
        return Vec::new();
    }
    let d = ds.exo_count();
    (0..count)
        .map(|k| {
            let o = range.start + k;
            let take = |chans: Range<usize>, from: usize, n: usize| -> Vec<f64> {
                chans.flat_map(|c| ds.channel(c)[from..from + n].to_vec()).collect()
            };
            WindowedSample {
                origin: o,
                x_exo: take(0..d, o, t),
                x_endo: take(d..ds.channels, o, t),
                y_exo: take(0..d, o + t, f),
                y_endo: take(d..ds.channels, o + t, f),
            }
        })
        .collect()
}

/// Stacked samples, `[B × C × steps]` flat buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub n_endo: usize,
    pub n_exo: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub x_endo: Vec<f64>,
    pub x_exo: Vec<f64>,
    pub y_exo: Option<Vec<f64>>,
    pub y_endo: Option<Vec<f64>>,
}

impl Batch {
    pub fn from_samples(samples: &[&WindowedSample], n_endo: usize, n_exo: usize) -> Result<Self> {
        let first = samples.first().ok_or_else(|| DagError::contract("empty batch"))?;
        let lookback = first.x_endo.len() / n_endo;
        let horizon = first.y_endo.len() / n_endo;
        let mut b = Batch {
            size: samples.len(),
            n_endo,
            n_exo,
            lookback,
            horizon,
            x_endo: Vec::with_capacity(samples.len() * first.x_endo.len()),
            x_exo: Vec::with_capacity(samples.len() * first.x_exo.len()),
            y_exo: Some(Vec::with_capacity(samples.len() * first.y_exo.len())),
            y_endo: Some(Vec::with_capacity(samples.len() * first.y_endo.len())),
        };
        for s in samples {
            if s.x_endo.len() != n_endo * lookback
                || s.x_exo.len() != n_exo * lookback
                || s.y_endo.len() != n_endo * horizon
                || s.y_exo.len() != n_exo * horizon
            {
                return Err(DagError::dim(
                    "batch",
                    &[n_endo, n_exo, lookback, horizon],
                    &[s.x_endo.len(), s.x_exo.len()],
                ));
            }
            b.x_endo.extend(&s.x_endo);
            b.x_exo.extend(&s.x_exo);
            b.y_exo.as_mut().expect("set above").extend(&s.y_exo);
            b.y_endo.as_mut().expect("set above").extend(&s.y_endo);
        }
        Ok(b)
    }

    pub fn without_future_exo(mut self) -> Self {
        self.y_exo = None;
        self
    }

    pub fn without_targets(mut self) -> Self {
        self.y_endo = None;
        self
    }
}
