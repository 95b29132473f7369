//! Synthetic series with planted temporal and channel dependence.
//!
//! Exogenous channel `j` is an AR(2) process plus a sinusoid; endogenous
//! channel `i` follows `endo_t = ρ·endo_{t−1} + (B·exo_t)_i + noise`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::RawDataset;
use crate::error::{DagError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_exo: usize,
    pub n_endo: usize,
    pub len: usize,
    /// `(φ1, φ2)` per exogenous channel.
    pub ar: Vec<(f64, f64)>,
    pub season_period: f64,
    pub season_amplitude: f64,
    /// Row-major `[n_endo × n_exo]`.
    pub mix: Vec<f64>,
    pub rho: f64,
    pub sigma_exo: f64,
    pub sigma_endo: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Dual-causality benchmark generator: persistent endogenous dynamics
    /// driven by contemporaneous exogenous values.
    pub fn planted(n_exo: usize, n_endo: usize, len: usize, seed: u64) -> Self {
        let ar = (0..n_exo)
            .map(|j| (0.5 + 0.1 * (j % 3) as f64, 0.2 - 0.05 * (j % 2) as f64))
            .collect();
        let mix = (0..n_endo * n_exo)
            .map(|k| {
                let j = k % n_exo;
                let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
                sign * (0.6 - 0.1 * (j % 4) as f64)
            })
            .collect();
        SyntheticSpec {
            n_exo,
            n_endo,
            len,
            ar,
            season_period: 24.0,
            season_amplitude: 1.0,
            mix,
            rho: 0.8,
            sigma_exo: 0.5,
            sigma_endo: 0.1,
            burn_in: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_exo == 0 || self.n_endo == 0 || self.len == 0 {
            return Err(DagError::Spec("channel counts and length must be positive".into()));
        }
        if self.ar.len() != self.n_exo {
            return Err(DagError::Spec(format!(
                "expected {} AR pairs, got {}",
                self.n_exo,
                self.ar.len()
            )));
        }
        if self.mix.len() != self.n_exo * self.n_endo {
            return Err(DagError::Spec(format!(
                "mixing matrix needs {} entries, got {}",
                self.n_exo * self.n_endo,
                self.mix.len()
            )));
        }
        for (j, &(p1, p2)) in self.ar.iter().enumerate() {
            // AR(2) stationarity triangle
            if !(p2.abs() < 1.0 && p1 + p2 < 1.0 && p2 - p1 < 1.0) {
                return Err(DagError::Spec(format!(
                    "AR coefficients ({p1}, {p2}) of channel {j} are not stationary"
                )));
            }
        }
        if self.rho.abs() >= 1.0 {
            return Err(DagError::Spec(format!(
                "endogenous coefficient {} is not stationary",
                self.rho
            )));
        }
        if self.sigma_exo < 0.0 || self.sigma_endo < 0.0 || self.season_period <= 0.0 {
            return Err(DagError::Spec(
                "noise scales must be nonnegative and the period positive".into(),
            ));
        }
        Ok(())
    }

    /// Lag-1 autocorrelation of the AR part of exogenous channel `j`.
    pub fn ar_lag1_autocorrelation(&self, j: usize) -> f64 {
        let (p1, p2) = self.ar[j];
        p1 / (1.0 - p2)
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<RawDataset> {
    spec.validate()?;
    let (d, n, len) = (spec.n_exo, spec.n_endo, spec.len);
    let total = spec.burn_in + len;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut ar_state = vec![(0.0f64, 0.0f64); d];
    let mut endo_prev = vec![0.0; n];
    let mut exo = vec![0.0; d * len];
    let mut endo = vec![0.0; n * len];
    let mut exo_t = vec![0.0; d];

    for step in 0..total {
        for j in 0..d {
            let (p1, p2) = spec.ar[j];
            let (a1, a2) = ar_state[j];
            let a = p1 * a1 + p2 * a2 + spec.sigma_exo * noise();
            ar_state[j] = (a, a1);
            let phase = 2.0 * PI * j as f64 / d as f64;
            exo_t[j] = a + spec.season_amplitude * (2.0 * PI * step as f64 / spec.season_period + phase).sin();
        }
        for (i, prev) in endo_prev.iter_mut().enumerate() {
            let drive: f64 = (0..d).map(|j| spec.mix[i * d + j] * exo_t[j]).sum();
            *prev = spec.rho * *prev + drive + spec.sigma_endo * noise();
        }
        if step >= spec.burn_in {
            let t = step - spec.burn_in;
            for j in 0..d {
                exo[j * len + t] = exo_t[j];
            }
            for i in 0..n {
                endo[i * len + t] = endo_prev[i];
            }
        }
    }

    let mut values = exo;
    values.extend(endo);
    let mut names: Vec<String> = (0..d).map(|j| format!("exo_{j}")).collect();
    names.extend((0..n).map(|i| format!("endo_{i}")));
    let mut metadata = BTreeMap::new();
    metadata.insert("source".into(), "synthetic".into());
    metadata.insert("seed".into(), spec.seed.to_string());
    RawDataset::new(values, d + n, len, names, n, metadata)
}
