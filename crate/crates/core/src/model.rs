//! The full model: temporal and channel discovery/injection networks, fusion
//! of the two endogenous forecasts, and the composite training loss
//! `L_total = L_f + λ2·(L_t + L_c)`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::{self as ag, no_grad, Parameter, Tensor};
use crate::channel::{
    channel_discovery_forward, channel_injection_forward, channel_loss, ChannelDims, ChannelDiscoveryNet,
    ChannelInjectionNet,
};
use crate::data::norm::{self, ChannelStats};
use crate::data::Batch;
use crate::embedding::PatchGeometry;
use crate::error::{DagError, Result};
use crate::layers::ParamBuilder;
use crate::temporal::{
    temporal_discovery_forward, temporal_injection_forward, temporal_loss, AlphaMode, TemporalDims,
    TemporalDiscoveryNet, TemporalInjectionNet,
};

/// Architecture and loss hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagConfig {
    pub n_endo: usize,
    pub n_exo: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub d_model: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_hidden: usize,
    pub gate_hidden: usize,
    /// Weight of the temporal-injection forecast in the fused prediction.
    pub lambda1: f64,
    /// Weight of the two causality losses.
    pub lambda2: f64,
    /// Apply a second softmax to the fused score before attending.
    pub double_softmax: bool,
    /// Per-window z-scoring of inputs with de-normalized outputs.
    pub normalize: bool,
    pub seed: u64,
}

impl DagConfig {
    pub fn new(n_endo: usize, n_exo: usize, lookback: usize, horizon: usize) -> Self {
        let d_model = 16;
        let patch_len = 16.min(lookback);
        DagConfig {
            n_endo,
            n_exo,
            lookback,
            horizon,
            d_model,
            patch_len,
            stride: patch_len,
            layers: 1,
            heads: 1,
            ff_hidden: 4 * d_model,
            gate_hidden: d_model,
            lambda1: 0.5,
            lambda2: 0.5,
            double_softmax: true,
            normalize: true,
            seed: 0,
        }
    }

    /// Sets the token width and the hidden widths derived from it.
    pub fn with_d_model(mut self, d: usize) -> Self {
        self.d_model = d;
        self.ff_hidden = 4 * d;
        self.gate_hidden = d;
        self
    }

    pub fn with_patch(mut self, patch_len: usize, stride: usize) -> Self {
        self.patch_len = patch_len;
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.n_endo", self.n_endo),
            ("model.n_exo", self.n_exo),
            ("model.lookback", self.lookback),
            ("model.horizon", self.horizon),
            ("model.d_model", self.d_model),
            ("model.patch_len", self.patch_len),
            ("model.stride", self.stride),
            ("model.layers", self.layers),
            ("model.heads", self.heads),
            ("model.ff_hidden", self.ff_hidden),
            ("model.gate_hidden", self.gate_hidden),
        ];
        for (path, v) in positive {
            if v == 0 {
                return Err(DagError::config(path, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda1) {
            return Err(DagError::config(
                "model.lambda1",
                format!("{} not in [0, 1]", self.lambda1),
            ));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(DagError::config(
                "model.lambda2",
                format!("{} must be >= 0", self.lambda2),
            ));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(DagError::config("model.heads", "must divide d_model"));
        }
        if self.patch_len > self.lookback {
            return Err(DagError::config("model.patch_len", "exceeds lookback"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<PatchGeometry> {
        PatchGeometry::new(self.lookback, self.patch_len, self.stride)
    }

    /// Stable short hash of the configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn temporal_dims(&self) -> Result<TemporalDims> {
        Ok(TemporalDims {
            geometry: self.geometry()?,
            horizon: self.horizon,
            d_model: self.d_model,
            ff_hidden: self.ff_hidden,
            gate_hidden: self.gate_hidden,
            heads: self.heads,
            layers: self.layers,
        })
    }

    fn channel_dims(&self) -> ChannelDims {
        ChannelDims {
            n_endo: self.n_endo,
            n_exo: self.n_exo,
            lookback: self.lookback,
            horizon: self.horizon,
            d_model: self.d_model,
            ff_hidden: self.ff_hidden,
            gate_hidden: self.gate_hidden,
            heads: self.heads,
            layers: self.layers,
        }
    }
}

/// Which networks run and how the injection weights are set. The default is
/// the complete model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wiring {
    /// Temporal injection network (endogenous history → endogenous future).
    pub temporal_injection: bool,
    /// Channel injection network (exogenous future → endogenous future).
    pub channel_injection: bool,
    /// Temporal discovery forward pass and `L_t`.
    pub temporal_discovery: bool,
    /// Channel discovery forward pass and `L_c`.
    pub channel_discovery: bool,
    pub temporal_alpha: AlphaModeSerde,
    pub channel_alpha: AlphaModeSerde,
    /// Overrides the configured fusion weight.
    pub lambda1: Option<f64>,
}

/// Serializable mirror of [`AlphaMode`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AlphaModeSerde {
    Gated,
    Fixed(f64),
}

impl From<AlphaModeSerde> for AlphaMode {
    fn from(m: AlphaModeSerde) -> Self {
        match m {
            AlphaModeSerde::Gated => AlphaMode::Gated,
            AlphaModeSerde::Fixed(v) => AlphaMode::Fixed(v),
        }
    }
}

impl Default for Wiring {
    fn default() -> Self {
        Wiring {
            temporal_injection: true,
            channel_injection: true,
            temporal_discovery: true,
            channel_discovery: true,
            temporal_alpha: AlphaModeSerde::Gated,
            channel_alpha: AlphaModeSerde::Gated,
            lambda1: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Losses {
    pub l_t: Option<Tensor>,
    pub l_c: Option<Tensor>,
    pub l_f: Tensor,
    pub total: Tensor,
}

/// All forward products. Prediction tensors are batched (`[B × C × steps]`)
/// and in the original (de-normalized) scale.
#[derive(Clone, Debug)]
pub struct ForwardOutputs {
    pub y_endo_hat: Tensor,
    pub y_endo_ddot: Option<Tensor>,
    pub y_endo_dot: Option<Tensor>,
    pub y_exo_hat: Option<Tensor>,
    pub x_endo_hat: Option<Tensor>,
    /// `[B × N]`
    pub temporal_alphas: Option<Tensor>,
    /// `[B]`
    pub channel_alpha: Option<Tensor>,
    pub losses: Option<Losses>,
}

pub struct DagModel {
    pub config: DagConfig,
    pub wiring: Wiring,
    pub temporal_discovery: TemporalDiscoveryNet,
    pub temporal_injection: TemporalInjectionNet,
    pub channel_discovery: ChannelDiscoveryNet,
    pub channel_injection: ChannelInjectionNet,
    params: Vec<Parameter>,
}

pub(crate) struct Normalized {
    pub(crate) x_endo: Tensor,
    pub(crate) x_exo: Tensor,
    pub(crate) y_exo: Option<Tensor>,
    pub(crate) endo: ChannelStats,
    pub(crate) exo: ChannelStats,
}

impl DagModel {
    pub fn new(config: DagConfig) -> Result<Self> {
        config.validate()?;
        let td = config.temporal_dims()?;
        let cd = config.channel_dims();
        let mut pb = ParamBuilder::new(config.seed);
        let temporal_discovery = TemporalDiscoveryNet::new(&mut pb, "temporal.discovery", &td)?;
        let temporal_injection = TemporalInjectionNet::new(
            &mut pb,
            "temporal.injection",
            &td,
            &temporal_discovery,
            config.double_softmax,
        )?;
        let channel_discovery = ChannelDiscoveryNet::new(&mut pb, "channel.discovery", &cd)?;
        let channel_injection = ChannelInjectionNet::new(
            &mut pb,
            "channel.injection",
            &cd,
            &channel_discovery,
            config.double_softmax,
        )?;
        Ok(DagModel {
            config,
            wiring: Wiring::default(),
            temporal_discovery,
            temporal_injection,
            channel_discovery,
            channel_injection,
            params: pb.finish(),
        })
    }

    pub fn with_wiring(mut self, wiring: Wiring) -> Self {
        self.wiring = wiring;
        self
    }

    /// Every trainable parameter exactly once, in construction order. Shared
    /// projections appear under their discovery-network names only.
    pub fn named_parameters(&self) -> &[Parameter] {
        &self.params
    }

    pub fn parameter(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn lambda1(&self) -> f64 {
        self.wiring.lambda1.unwrap_or(self.config.lambda1)
    }

    /// Parameters that receive gradients under the current wiring.
    pub fn trainable_parameters(&self) -> Vec<Parameter> {
        let w = &self.wiring;
        let is_shared = |n: &str| n.ends_with(".w_q_prime") || n.ends_with(".w_k_prime");
        let injects = |mode: AlphaModeSerde| mode != AlphaModeSerde::Fixed(1.0);
        let gated = |mode: AlphaModeSerde| mode == AlphaModeSerde::Gated;
        self.params
            .iter()
            .filter(|p| {
                let n = p.name.as_str();
                if let Some(rest) = n.strip_prefix("temporal.injection.") {
                    w.temporal_injection && (!rest.starts_with("gate.") || gated(w.temporal_alpha))
                } else if n.starts_with("temporal.discovery.") {
                    w.temporal_discovery || (w.temporal_injection && injects(w.temporal_alpha) && is_shared(n))
                } else if let Some(rest) = n.strip_prefix("channel.injection.") {
                    w.channel_injection && (!rest.starts_with("gate.") || gated(w.channel_alpha))
                } else if n.starts_with("channel.discovery.") {
                    w.channel_discovery || (w.channel_injection && injects(w.channel_alpha) && is_shared(n))
                } else {
                    true
                }
            })
            .cloned()
            .collect()
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let c = &self.config;
        let want = [c.n_endo, c.n_exo, c.lookback, c.horizon];
        let got = [batch.n_endo, batch.n_exo, batch.lookback, batch.horizon];
        if want != got {
            return Err(DagError::dim("forward", &want, &got));
        }
        Ok(())
    }

    /// Runs the wired networks on a batch. Losses are computed when the batch
    /// carries endogenous targets.
    pub fn forward(&self, batch: &Batch) -> Result<ForwardOutputs> {
        self.check_batch(batch)?;
        let w = self.wiring;
        if !w.temporal_injection && !w.channel_injection {
            return Err(DagError::contract("wiring enables no forecasting branch"));
        }
        let z = normalize_batch(batch, self.config.normalize)?;
        let (b, n, t, f) = (batch.size, batch.n_endo, batch.lookback, batch.horizon);
        let d = batch.n_exo;
        let raw = |v: &[f64], c: usize, len: usize| Tensor::new(v.to_vec(), &[b, c, len]);

        let y_exo_hat = if w.temporal_discovery {
            let (y, _) = temporal_discovery_forward(&z.x_exo, &self.temporal_discovery)?;
            Some(denormalize(self.config.normalize, &y, &z.exo)?)
        } else {
            None
        };
        let x_endo_hat = if w.channel_discovery {
            let (x, _) = channel_discovery_forward(&z.x_exo, &self.channel_discovery)?;
            Some(denormalize(self.config.normalize, &x, &z.endo)?)
        } else {
            None
        };

        let (y_endo_ddot, temporal_alphas) = if w.temporal_injection {
            let (y, a) = temporal_injection_forward(
                &z.x_endo,
                &z.x_exo,
                (&self.temporal_discovery, &self.temporal_injection),
                w.temporal_alpha.into(),
            )?;
            (Some(denormalize(self.config.normalize, &y, &z.endo)?), Some(a))
        } else {
            (None, None)
        };
        let (y_endo_dot, channel_alpha) = if w.channel_injection {
            let y_exo = z.y_exo.as_ref().ok_or_else(|| {
                DagError::contract("future exogenous values are required by the channel injection network")
            })?;
            let (y, a) = channel_injection_forward(
                y_exo,
                &z.x_exo,
                (&self.channel_discovery, &self.channel_injection),
                w.channel_alpha.into(),
            )?;
            (Some(denormalize(self.config.normalize, &y, &z.endo)?), Some(a))
        } else {
            (None, None)
        };

        let y_endo_hat = match (&y_endo_ddot, &y_endo_dot) {
            (Some(a), Some(c)) => {
                let l1 = self.lambda1();
                ag::add(&ag::scale(a, l1), &ag::scale(c, 1.0 - l1))?
            }
            (Some(a), None) => a.clone(),
            (None, Some(c)) => c.clone(),
            (None, None) => unreachable!("checked above"),
        };

        let losses = match &batch.y_endo {
            None => None,
            Some(target) => {
                let l_f = ag::l1_loss(&y_endo_hat, &raw(target, n, f)?)?;
                let l_t = match (&y_exo_hat, &batch.y_exo) {
                    (Some(p), Some(y)) => Some(temporal_loss(&raw(y, d, f)?, p)?),
                    _ => None,
                };
                let l_c = match &x_endo_hat {
                    Some(p) => Some(channel_loss(&raw(&batch.x_endo, n, t)?, p)?),
                    None => None,
                };
                let aux = match (&l_t, &l_c) {
                    (Some(a), Some(c)) => Some(ag::add(a, c)?),
                    (Some(a), None) => Some(a.clone()),
                    (None, Some(c)) => Some(c.clone()),
                    (None, None) => None,
                };
                let total = match aux {
                    Some(aux) => ag::add(&l_f, &ag::scale(&aux, self.config.lambda2))?,
                    None => l_f.clone(),
                };
                Some(Losses { l_t, l_c, l_f, total })
            }
        };

        Ok(ForwardOutputs {
            y_endo_hat,
            y_endo_ddot,
            y_endo_dot,
            y_exo_hat,
            x_endo_hat,
            temporal_alphas,
            channel_alpha,
            losses,
        })
    }

    /// Exogenous forecast of the temporal discovery network, de-normalized,
    /// `[B × D × F]` flat.
    pub fn forecast_exo(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let _g = no_grad();
        let z = normalize_batch(batch, self.config.normalize)?;
        let (y, _) = temporal_discovery_forward(&z.x_exo, &self.temporal_discovery)?;
        Ok(denormalize(self.config.normalize, &y, &z.exo)?.to_vec())
    }

    /// Fused endogenous forecast `[B × N × F]` using the batch's future
    /// exogenous values.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let _g = no_grad();
        let mut b = batch.clone();
        b.y_endo = None;
        Ok(self.forward(&b)?.y_endo_hat.to_vec())
    }

    /// Forecast when future exogenous values are unavailable: the temporal
    /// discovery forecast stands in for them.
    pub fn predict_without_future_exo(&self, batch: &Batch) -> Result<Vec<f64>> {
        let mut b = batch.clone();
        b.y_exo = if self.wiring.channel_injection {
            Some(self.forecast_exo(batch)?)
        } else {
            None
        };
        self.predict(&b)
    }

    /// `(name, shape, values)` for every parameter.
    pub fn state(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.tensor.shape().to_vec(), p.tensor.to_vec()))
            .collect()
    }

    pub fn load_state(&self, records: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        if records.len() != self.params.len() {
            return Err(DagError::Checkpoint(format!(
                "expected {} parameter records, found {}",
                self.params.len(),
                records.len()
            )));
        }
        for (name, shape, values) in records {
            let p = self
                .parameter(name)
                .ok_or_else(|| DagError::Checkpoint(format!("unknown parameter `{name}`")))?;
            if p.tensor.shape() != shape.as_slice() {
                return Err(DagError::Checkpoint(format!(
                    "shape of `{name}` is {:?}, checkpoint has {shape:?}",
                    p.tensor.shape()
                )));
            }
            p.tensor.set_data(values)?;
        }
        Ok(())
    }
}

/// Per-window z-scoring of a batch's inputs (identity when disabled).
pub(crate) fn normalize_batch(batch: &Batch, enabled: bool) -> Result<Normalized> {
    let (b, n, d, t, f) = (batch.size, batch.n_endo, batch.n_exo, batch.lookback, batch.horizon);
    let (endo, exo) = if enabled {
        (
            norm::normalize_stats(&batch.x_endo, t),
            norm::normalize_stats(&batch.x_exo, t),
        )
    } else {
        (ChannelStats::identity(b * n), ChannelStats::identity(b * d))
    };
    let tensor = |v: Vec<f64>, c: usize, len: usize| Tensor::new(v, &[b, c, len]);
    let x_endo = tensor(norm::apply(&batch.x_endo, &endo), n, t)?;
    let x_exo = tensor(norm::apply(&batch.x_exo, &exo), d, t)?;
    let y_exo = match &batch.y_exo {
        Some(y) => Some(tensor(norm::apply(y, &exo), d, f)?),
        None => None,
    };
    Ok(Normalized {
        x_endo,
        x_exo,
        y_exo,
        endo,
        exo,
    })
}

/// Maps a normalized `[.. × rows × len]` prediction back to the original scale.
pub(crate) fn denormalize(enabled: bool, y: &Tensor, stats: &ChannelStats) -> Result<Tensor> {
    if !enabled {
        return Ok(y.clone());
    }
    let len = y.shape()[y.rank() - 1];
    let expand = |v: &[f64]| v.iter().flat_map(|&s| std::iter::repeat_n(s, len)).collect::<Vec<_>>();
    let scale = Tensor::new(expand(&stats.std), y.shape())?;
    let shift = Tensor::new(expand(&stats.mean), y.shape())?;
    ag::add(&ag::mul(y, &scale)?, &shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn tiny() -> DagConfig {
        DagConfig::new(1, 2, 16, 4).with_d_model(8).with_patch(8, 8)
    }

    fn batch(cfg: &DagConfig, size: usize, seed: u64) -> Batch {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
        let (n, d, t, f) = (cfg.n_endo, cfg.n_exo, cfg.lookback, cfg.horizon);
        Batch {
            size,
            n_endo: n,
            n_exo: d,
            lookback: t,
            horizon: f,
            x_endo: v(size * n * t),
            x_exo: v(size * d * t),
            y_exo: Some(v(size * d * f)),
            y_endo: Some(v(size * n * f)),
        }
    }

    #[test]
    fn fusion_endpoints_exact() {
        for (l1, pick_ddot) in [(1.0, true), (0.0, false)] {
            let mut cfg = tiny();
            cfg.lambda1 = l1;
            let m = DagModel::new(cfg.clone()).unwrap();
            let out = m.forward(&batch(&cfg, 2, 1)).unwrap();
            let expect = if pick_ddot {
                out.y_endo_ddot.unwrap()
            } else {
                out.y_endo_dot.unwrap()
            };
            assert_eq!(out.y_endo_hat.to_vec(), expect.to_vec());
        }
    }

    #[test]
    fn lambda2_zero_collapses_total() {
        let mut cfg = tiny();
        cfg.lambda2 = 0.0;
        let m = DagModel::new(cfg.clone()).unwrap();
        let l = m.forward(&batch(&cfg, 3, 2)).unwrap().losses.unwrap();
        assert_eq!(l.total.item(), l.l_f.item());
    }

    #[test]
    fn missing_future_exo_is_contract_error() {
        let cfg = tiny();
        let m = DagModel::new(cfg.clone()).unwrap();
        let b = batch(&cfg, 1, 3).without_future_exo();
        assert!(matches!(m.forward(&b), Err(DagError::Contract(_))));
    }

    #[test]
    fn shared_projections_listed_once() {
        let m = DagModel::new(tiny()).unwrap();
        let names: Vec<&str> = m.named_parameters().iter().map(|p| p.name.as_str()).collect();
        assert!(names.contains(&"temporal.discovery.w_q_prime"));
        assert!(names.contains(&"channel.discovery.w_k_prime"));
        assert!(!names
            .iter()
            .any(|n| n.starts_with("temporal.injection") && n.ends_with("_prime")));
        let q = &m.parameter("temporal.discovery.w_q_prime").unwrap().tensor;
        assert!(m.temporal_injection.blocks[0].injected_q.same_storage(q));
        let storages = m
            .named_parameters()
            .iter()
            .filter(|p| p.tensor.same_storage(&m.channel_injection.blocks[0].injected_k))
            .count();
        assert_eq!(storages, 1);
    }

    #[test]
    fn no_future_exo_substitution_identity() {
        let cfg = tiny();
        let m = DagModel::new(cfg.clone()).unwrap();
        let b = batch(&cfg, 2, 4);
        let direct = m.predict_without_future_exo(&b).unwrap();
        let mut sub = b.clone();
        sub.y_exo = Some(m.forward(&b).unwrap().y_exo_hat.unwrap().to_vec());
        assert_eq!(direct, m.predict(&sub).unwrap());
        assert_eq!(direct.len(), 2 * cfg.n_endo * cfg.horizon);
    }

    #[test]
    fn state_roundtrip() {
        let cfg = tiny();
        let a = DagModel::new(cfg.clone()).unwrap();
        let mut other = cfg.clone();
        other.seed = 99;
        let b = DagModel::new(other).unwrap();
        b.load_state(&a.state()).unwrap();
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny();
        cfg.lambda1 = 1.5;
        assert!(matches!(DagModel::new(cfg), Err(DagError::Config { .. })));
        let mut cfg = tiny();
        cfg.lambda2 = -0.1;
        assert!(DagModel::new(cfg).is_err());
    }
}
