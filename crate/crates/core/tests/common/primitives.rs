//! The autograd primitives as randomized finite-difference cases, shared by
//! the gradient-check suite and the acceptance run.

use dag_forecast::autograd::{self as ag, Tensor};
use dag_forecast::Result;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{away_from_zero, check_inputs, leaf, rng, uniform, GradCheck};

/// Random draws per primitive.
pub const CASES: usize = 100;

pub type Build = Box<dyn Fn() -> Result<Tensor>>;
type Make = fn(&mut ChaCha8Rng, u64) -> (Vec<Tensor>, Build);

pub struct Primitive {
    pub group: &'static str,
    pub name: &'static str,
    make: Make,
}

impl Primitive {
    /// Finite-difference check over [`CASES`] random draws.
    pub fn check(&self) -> GradCheck {
        let mut total = GradCheck::default();
        for case in 0..CASES as u64 {
            let mut r = rng(1000 + case);
            let (inputs, f) = (self.make)(&mut r, case);
            total.merge(check_inputs(&inputs, &*f));
        }
        total
    }
}

/// `Σ w ⊙ y` with fixed random weights, so every output entry contributes a
/// distinct cotangent.
fn weighted(y: Result<Tensor>, seed: u64) -> Result<Tensor> {
    let y = y?;
    let w = Tensor::new(uniform(&mut rng(seed), y.numel(), -1.0, 1.0), y.shape())?;
    Ok(ag::sum(&ag::mul(&y, &w)?))
}

fn dims(r: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| r.gen_range(1..5)).collect()
}

pub fn all() -> Vec<Primitive> {
    vec![
        Primitive {
            group: "elementwise_binary",
            name: "add",
            make: |r, s| {
                let sh = dims(r, 2);
                let (a, b) = (leaf(r, &sh), leaf(r, &sh));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::add(&x, &y), s)))
            },
        },
        Primitive {
            group: "elementwise_binary",
            name: "sub",
            make: |r, s| {
                let sh = dims(r, 3);
                let (a, b) = (leaf(r, &sh), leaf(r, &sh));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::sub(&x, &y), s)))
            },
        },
        Primitive {
            group: "elementwise_binary",
            name: "mul",
            make: |r, s| {
                let sh = dims(r, 2);
                let (a, b) = (leaf(r, &sh), leaf(r, &sh));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::mul(&x, &y), s)))
            },
        },
        Primitive {
            group: "scalar_affine",
            name: "scale",
            make: |r, s| {
                let sh = dims(r, 2);
                let a = leaf(r, &sh);
                let c = r.gen_range(-2.0..2.0);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(Ok(ag::scale(&x, c)), s)))
            },
        },
        Primitive {
            group: "scalar_affine",
            name: "add_scalar",
            make: |r, s| {
                let sh = dims(r, 2);
                let a = leaf(r, &sh);
                let c = r.gen_range(-2.0..2.0);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(Ok(ag::add_scalar(&x, c)), s)))
            },
        },
        Primitive {
            group: "trailing_broadcasts",
            name: "add_trailing",
            make: |r, s| {
                let sh = dims(r, 3);
                let (a, b) = (leaf(r, &sh), leaf(r, &sh[1..]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::add_trailing(&x, &y), s)))
            },
        },
        Primitive {
            group: "trailing_broadcasts",
            name: "mul_trailing",
            make: |r, s| {
                let sh = dims(r, 3);
                let (a, b) = (leaf(r, &sh), leaf(r, &sh[2..]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::mul_trailing(&x, &y), s)))
            },
        },
        Primitive {
            group: "activations",
            name: "relu",
            make: |r, s| {
                let sh = dims(r, 2);
                let n = sh.iter().product();
                let a = Tensor::leaf(away_from_zero(r, n, 0.01), &sh).unwrap();
                let x = a.clone();
                (vec![a], Box::new(move || weighted(Ok(ag::relu(&x)), s)))
            },
        },
        Primitive {
            group: "activations",
            name: "sigmoid",
            make: |r, s| {
                let sh = dims(r, 2);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(Ok(ag::sigmoid(&x)), s)))
            },
        },
        Primitive {
            group: "activations",
            name: "gelu",
            make: |r, s| {
                let sh = dims(r, 2);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(Ok(ag::gelu(&x)), s)))
            },
        },
        Primitive {
            group: "matmul_layouts",
            name: "matmul",
            make: |r, s| {
                let (m, k, n) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
                let (a, b) = (leaf(r, &[m, k]), leaf(r, &[k, n]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::matmul(&x, &y), s)))
            },
        },
        Primitive {
            group: "matmul_layouts",
            name: "matmul_batched_left",
            make: |r, s| {
                let (bt, m, k, n) = (
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                );
                let (a, b) = (leaf(r, &[bt, m, k]), leaf(r, &[k, n]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::matmul(&x, &y), s)))
            },
        },
        Primitive {
            group: "matmul_layouts",
            name: "matmul_batched_right",
            make: |r, s| {
                let (bt, m, k, n) = (
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                );
                let (a, b) = (leaf(r, &[m, k]), leaf(r, &[bt, k, n]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::matmul(&x, &y), s)))
            },
        },
        Primitive {
            group: "matmul_layouts",
            name: "matmul_batched_both",
            make: |r, s| {
                let (bt, m, k, n) = (
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                );
                let (a, b) = (leaf(r, &[bt, m, k]), leaf(r, &[bt, k, n]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::matmul(&x, &y), s)))
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "transpose",
            make: |r, s| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::transpose(&x), s)))
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "permute",
            make: |r, s| {
                let sh = dims(r, 4);
                let a = leaf(r, &sh);
                let mut axes = vec![0, 1, 2, 3];
                axes.shuffle(r);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::permute(&x, &axes), s)))
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "reshape",
            make: |r, s| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let target = [sh[0] * sh[1], sh[2]];
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::reshape(&x, &target), s)))
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "flatten",
            make: |r, s| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::flatten(&x), s)))
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "concat",
            make: |r, s| {
                let sh = dims(r, 3);
                let axis = r.gen_range(0..3);
                let mut other = sh.clone();
                other[axis] = r.gen_range(1..4);
                let (a, b) = (leaf(r, &sh), leaf(r, &other));
                let (x, y) = (a.clone(), b.clone());
                (
                    vec![a, b],
                    Box::new(move || weighted(ag::concat(&[x.clone(), y.clone()], axis), s)),
                )
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "expand_axis",
            make: |r, s| {
                let sh = dims(r, 2);
                let axis = r.gen_range(0..3);
                let n = r.gen_range(1..4);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::expand_axis(&x, axis, n), s)))
            },
        },
        Primitive {
            group: "shape_primitives",
            name: "unfold_last",
            make: |r, s| {
                let t = r.gen_range(3..11);
                let p = r.gen_range(1..=t);
                let stride = r.gen_range(1..4);
                let rows = r.gen_range(1..3);
                let a = leaf(r, &[rows, t]);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::unfold_last(&x, p, stride), s)))
            },
        },
        Primitive {
            group: "reductions",
            name: "sum",
            make: |r, _| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || Ok(ag::sum(&x))))
            },
        },
        Primitive {
            group: "reductions",
            name: "mean",
            make: |r, _| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || Ok(ag::mean(&x))))
            },
        },
        Primitive {
            group: "reductions",
            name: "sum_last",
            make: |r, s| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::sum_last(&x), s)))
            },
        },
        Primitive {
            group: "reductions",
            name: "mean_axis",
            make: |r, s| {
                let axis = r.gen_range(0..3);
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::mean_axis(&x, axis), s)))
            },
        },
        Primitive {
            group: "reductions",
            name: "dot",
            make: |r, _| {
                let n = r.gen_range(1..8);
                let (a, b) = (leaf(r, &[n]), leaf(r, &[n]));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || ag::dot(&x, &y)))
            },
        },
        Primitive {
            group: "reductions",
            name: "dot_rows",
            make: |r, s| {
                let sh = dims(r, 2);
                let (a, b) = (leaf(r, &sh), leaf(r, &sh));
                let (x, y) = (a.clone(), b.clone());
                (vec![a, b], Box::new(move || weighted(ag::dot_rows(&x, &y), s)))
            },
        },
        Primitive {
            group: "normalizers",
            name: "softmax_rows",
            make: |r, s| {
                let sh = dims(r, 3);
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::softmax_rows(&x), s)))
            },
        },
        Primitive {
            group: "normalizers",
            name: "layer_norm_last",
            make: |r, s| {
                let mut sh = dims(r, 2);
                sh[1] += 1;
                let a = leaf(r, &sh);
                let x = a.clone();
                (vec![a], Box::new(move || weighted(ag::layer_norm_last(&x, 1e-5), s)))
            },
        },
        Primitive {
            group: "normalizers",
            name: "mix",
            make: |r, s| {
                let groups = r.gen_range(1..4);
                let per = r.gen_range(1..5);
                let al = Tensor::leaf(uniform(r, groups, 0.0, 1.0), &[groups]).unwrap();
                let (a, b) = (leaf(r, &[groups, per]), leaf(r, &[groups, per]));
                let (w, x, y) = (al.clone(), a.clone(), b.clone());
                (vec![al, a, b], Box::new(move || weighted(ag::mix(&w, &x, &y), s)))
            },
        },
        Primitive {
            group: "losses",
            name: "l1_loss",
            make: |r, _| {
                let sh = dims(r, 2);
                let n = sh.iter().product();
                let p = leaf(r, &sh);
                // targets at least 0.01 away from the predictions
                let offsets = away_from_zero(r, n, 0.01);
                let t: Vec<f64> = p.to_vec().iter().zip(offsets).map(|(a, o)| a + o).collect();
                let t = Tensor::leaf(t, &sh).unwrap();
                let (x, y) = (p.clone(), t.clone());
                (vec![p, t], Box::new(move || ag::l1_loss(&x, &y)))
            },
        },
        Primitive {
            group: "losses",
            name: "mse_loss",
            make: |r, _| {
                let sh = dims(r, 2);
                let (p, t) = (leaf(r, &sh), leaf(r, &sh));
                let (x, y) = (p.clone(), t.clone());
                (vec![p, t], Box::new(move || ag::mse_loss(&x, &y)))
            },
        },
    ]
}
