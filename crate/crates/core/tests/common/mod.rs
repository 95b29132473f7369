//! Shared helpers for the integration tests: finite-difference oracles,
//! seeded random inputs and small model configurations.
#![allow(dead_code)]

pub mod attention;
pub mod primitives;

use dag_forecast::autograd::{no_grad, Parameter, Tensor};
use dag_forecast::data::Batch;
use dag_forecast::model::{DagConfig, DagModel};
use dag_forecast::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so entries whose true gradient is
/// (numerically) zero are compared on an absolute scale instead.
pub const REL_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values in `±[margin, 1.5]`, keeping kinked primitives away from their kink.
pub fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v = rng.gen_range(margin..1.5);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

pub fn leaf(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::leaf(uniform(rng, n, -1.5, 1.5), shape).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` with respect to entry `i` of `t`; restores the
/// original value afterwards.
pub fn central_difference(t: &Tensor, i: usize, f: &dyn Fn() -> Result<Tensor>) -> f64 {
    let _g = no_grad();
    let orig = t.to_vec();
    let mut v = orig.clone();
    v[i] = orig[i] + FD_STEP;
    t.set_data(&v).unwrap();
    let up = f().unwrap().item();
    v[i] = orig[i] - FD_STEP;
    t.set_data(&v).unwrap();
    let down = f().unwrap().item();
    t.set_data(&orig).unwrap();
    (up - down) / (2.0 * FD_STEP)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub probes: usize,
    pub max_rel: f64,
}

impl GradCheck {
    pub fn merge(&mut self, other: GradCheck) {
        self.probes += other.probes;
        self.max_rel = self.max_rel.max(other.max_rel);
    }
}

/// Compares the analytic gradient of the scalar `f` with central differences
/// on every entry of every input.
pub fn check_inputs(inputs: &[Tensor], f: &dyn Fn() -> Result<Tensor>) -> GradCheck {
    inputs.iter().for_each(Tensor::zero_grad);
    f().unwrap().backward().unwrap();
    let mut out = GradCheck::default();
    for t in inputs {
        let analytic = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
        for (i, &a) in analytic.iter().enumerate() {
            let n = central_difference(t, i, f);
            out.probes += 1;
            out.max_rel = out.max_rel.max(rel_err(a, n));
        }
    }
    out
}

/// Same as [`check_inputs`] restricted to chosen `(parameter, entry)` probes.
pub fn check_probes(probes: &[(Parameter, usize)], f: &dyn Fn() -> Result<Tensor>) -> GradCheck {
    probes.iter().for_each(|(p, _)| p.tensor.zero_grad());
    f().unwrap().backward().unwrap();
    let mut out = GradCheck::default();
    for (p, i) in probes {
        let a = p.tensor.grad().map(|g| g[*i]).unwrap_or(0.0);
        let n = central_difference(&p.tensor, *i, f);
        out.probes += 1;
        out.max_rel = out.max_rel.max(rel_err(a, n));
    }
    out
}

/// The tiny end-to-end configuration: N=1, D=2, T=16, F=4, d=8, P=S=8 (M=2).
pub fn tiny_config() -> DagConfig {
    DagConfig::new(1, 2, 16, 4).with_d_model(8).with_patch(8, 8)
}

/// Random batch with targets and future exogenous values.
pub fn random_batch(cfg: &DagConfig, size: usize, seed: u64) -> Batch {
    let mut r = rng(seed);
    let (n, d, t, f) = (cfg.n_endo, cfg.n_exo, cfg.lookback, cfg.horizon);
    Batch {
        size,
        n_endo: n,
        n_exo: d,
        lookback: t,
        horizon: f,
        x_endo: uniform(&mut r, size * n * t, -2.0, 2.0),
        x_exo: uniform(&mut r, size * d * t, -2.0, 2.0),
        y_exo: Some(uniform(&mut r, size * d * f, -2.0, 2.0)),
        y_endo: Some(uniform(&mut r, size * n * f, -2.0, 2.0)),
    }
}

/// Maximum absolute row-sum deviation from 1 and the smallest entry of a
/// stack of square score matrices.
pub fn row_stochastic_error(score: &[f64], m: usize) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut min = f64::INFINITY;
    for row in score.chunks(m) {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        min = row.iter().copied().fold(min, f64::min);
    }
    (worst, min)
}

/// Probes drawn from `count` distinct random parameters, `per` entries each.
pub fn random_probes(model: &DagModel, count: usize, per: usize, seed: u64) -> Vec<(Parameter, usize)> {
    let mut r = rng(seed);
    let mut params: Vec<Parameter> = model.named_parameters().to_vec();
    params.shuffle(&mut r);
    params
        .into_iter()
        .take(count)
        .flat_map(|p| {
            let n = p.tensor.numel();
            let picks: Vec<usize> = (0..per).map(|_| r.gen_range(0..n)).collect();
            picks.into_iter().map(move |i| (p.clone(), i))
        })
        .collect()
}

/// Discovery-network projections that the injection networks reuse.
pub const SHARED: [&str; 4] = [
    "temporal.discovery.w_q_prime",
    "temporal.discovery.w_k_prime",
    "channel.discovery.w_q_prime",
    "channel.discovery.w_k_prime",
];

/// Random small configurations around the tiny one.
pub fn random_config(seed: u64) -> DagConfig {
    let mut r = rng(seed);
    let (n, d) = (r.gen_range(1..3), r.gen_range(1..4));
    let p = [4, 8][r.gen_range(0..2)];
    let t = p * r.gen_range(1..4);
    let mut cfg = DagConfig::new(n, d, t, r.gen_range(2..6))
        .with_d_model(8)
        .with_patch(p, p);
    cfg.lambda1 = r.gen_range(0.0..=1.0);
    cfg.lambda2 = r.gen_range(0.0..2.0);
    cfg.normalize = r.gen_bool(0.5);
    cfg.seed = seed;
    cfg
}

pub fn bits(t: &Tensor) -> Vec<u64> {
    t.to_vec().iter().map(|v| v.to_bits()).collect()
}

/// Dataset lengths and split ratios of the benchmark table, with the
/// train/val/test sizes given by `floor(L · cumulative fraction)`.
pub const SPLIT_TABLE: [(&str, usize, [u32; 3], [usize; 3]); 12] = [
    ("ETTh", 14_400, [6, 2, 2], [8_640, 2_880, 2_880]),
    ("ETTm", 57_600, [6, 2, 2], [34_560, 11_520, 11_520]),
    ("Weather", 52_696, [7, 1, 2], [36_887, 5_269, 10_540]),
    ("Exchange", 7_588, [7, 1, 2], [5_311, 759, 1_518]),
    ("Electricity", 26_304, [7, 1, 2], [18_412, 2_631, 5_261]),
    ("Traffic", 17_544, [7, 1, 2], [12_280, 1_755, 3_509]),
    ("NP", 52_416, [7, 1, 2], [36_691, 5_241, 10_484]),
    ("Energy", 13_064, [7, 1, 2], [9_144, 1_307, 2_613]),
    ("Colbun", 2_958, [7, 1, 2], [2_070, 296, 592]),
    ("Rapel", 3_366, [7, 1, 2], [2_356, 336, 674]),
    ("Sdwpfh", 14_641, [7, 1, 2], [10_248, 1_464, 2_929]),
    ("Sdwpfm", 29_281, [7, 1, 2], [20_496, 2_928, 5_857]),
];
