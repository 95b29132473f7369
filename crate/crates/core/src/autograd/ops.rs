//! Differentiable primitives. Every function validates shapes and returns a
//! new [`Tensor`]; gradients are recorded only when an input requires them.

use super::tensor::{numel, Tensor};
use crate::error::{DagError, Result};

// ---------------------------------------------------------------------------
// dense kernels
// ---------------------------------------------------------------------------

/// c[m×n] += a[m×k] · b[k×n]
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// c[m×n] += a[m×k] · b[n×k]ᵀ
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let s: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            c[i * n + j] += s;
        }
    }
}

/// c[m×n] += a[k×m]ᵀ · b[k×n]
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(DagError::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn unary(op: &'static str, x: &Tensor, f: impl Fn(f64) -> f64, df: impl Fn(f64, f64) -> f64 + 'static) -> Tensor {
    let xv = x.to_vec();
    let out: Vec<f64> = xv.iter().map(|&v| f(v)).collect();
    let yv = out.clone();
    Tensor::from_op(op, x.shape().to_vec(), out, vec![x.clone()], move |g| {
        let gx = g
            .iter()
            .zip(xv.iter().zip(&yv))
            .map(|(&gi, (&xi, &yi))| gi * df(xi, yi))
            .collect();
        vec![Some(gx)]
    })
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    let out = a.data().iter().zip(b.data().iter()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_op(
        "add",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        |g| vec![Some(g.to_vec()), Some(g.to_vec())],
    ))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    let out = a.data().iter().zip(b.data().iter()).map(|(x, y)| x - y).collect();
    Ok(Tensor::from_op(
        "sub",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        |g| vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
    ))
}

/// Elementwise (Hadamard) product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    let av = a.to_vec();
    let bv = b.to_vec();
    let out = av.iter().zip(&bv).map(|(x, y)| x * y).collect();
    Ok(Tensor::from_op(
        "mul",
        a.shape().to_vec(),
        out,
        vec![a.clone(), b.clone()],
        move |g| {
            let ga = g.iter().zip(&bv).map(|(g, y)| g * y).collect();
            let gb = g.iter().zip(&av).map(|(g, x)| g * x).collect();
            vec![Some(ga), Some(gb)]
        },
    ))
}

pub fn scale(x: &Tensor, c: f64) -> Tensor {
    let out = x.data().iter().map(|v| v * c).collect();
    Tensor::from_op("scale", x.shape().to_vec(), out, vec![x.clone()], move |g| {
        vec![Some(g.iter().map(|v| v * c).collect())]
    })
}

pub fn add_scalar(x: &Tensor, c: f64) -> Tensor {
    let out = x.data().iter().map(|v| v + c).collect();
    Tensor::from_op("add_scalar", x.shape().to_vec(), out, vec![x.clone()], |g| {
        vec![Some(g.to_vec())]
    })
}

fn trailing_len(op: &'static str, x: &Tensor, b: &Tensor) -> Result<usize> {
    let xs = x.shape();
    let bs = b.shape();
    if bs.len() > xs.len() || xs[xs.len() - bs.len()..] != *bs {
        return Err(DagError::dim(op, xs, bs));
    }
    Ok(b.numel())
}

/// `x + b` where `b` matches the trailing dimensions of `x` (bias and
/// positional-table broadcast).
pub fn add_trailing(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let inner = trailing_len("add_trailing", x, b)?;
    let bv = b.to_vec();
    let out = x
        .data()
        .chunks(inner)
        .flat_map(|row| row.iter().zip(&bv).map(|(u, v)| u + v).collect::<Vec<_>>())
        .collect();
    Ok(Tensor::from_op(
        "add_trailing",
        x.shape().to_vec(),
        out,
        vec![x.clone(), b.clone()],
        move |g| {
            let mut gb = vec![0.0; inner];
            for row in g.chunks(inner) {
                gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            vec![Some(g.to_vec()), Some(gb)]
        },
    ))
}

/// `x * b` with `b` broadcast over the leading dimensions of `x`.
pub fn mul_trailing(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let inner = trailing_len("mul_trailing", x, b)?;
    let xv = x.to_vec();
    let bv = b.to_vec();
    let out = xv
        .chunks(inner)
        .flat_map(|row| row.iter().zip(&bv).map(|(u, v)| u * v).collect::<Vec<_>>())
        .collect();
    Ok(Tensor::from_op(
        "mul_trailing",
        x.shape().to_vec(),
        out,
        vec![x.clone(), b.clone()],
        move |g| {
            let mut gx = vec![0.0; g.len()];
            let mut gb = vec![0.0; inner];
            for (r, (grow, xrow)) in g.chunks(inner).zip(xv.chunks(inner)).enumerate() {
                let base = r * inner;
                for j in 0..inner {
                    gx[base + j] = grow[j] * bv[j];
                    gb[j] += grow[j] * xrow[j];
                }
            }
            vec![Some(gx), Some(gb)]
        },
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    unary("relu", x, |v| v.max(0.0), |xi, _| if xi > 0.0 { 1.0 } else { 0.0 })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    unary(
        "sigmoid",
        x,
        |v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        },
        |_, y| y * (1.0 - y),
    )
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// GELU, tanh approximation.
pub fn gelu(x: &Tensor) -> Tensor {
    unary(
        "gelu",
        x,
        |v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()),
        |v, _| {
            let u = GELU_C * (v + 0.044715 * v * v * v);
            let t = u.tanh();
            let du = GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
            0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du
        },
    )
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// Matrix product over the last two axes.
///
/// Supported layouts: `[.., m, k] · [k, n]` (shared right operand),
/// `[m, k] · [.., k, n]` (shared left operand) and `[.., m, k] · [.., k, n]`
/// with identical leading dimensions.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ash, bsh) = (a.shape().to_vec(), b.shape().to_vec());
    if ash.len() < 2 || bsh.len() < 2 {
        return Err(DagError::dim("matmul", &ash, &bsh));
    }
    let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
    let (k2, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
    if k != k2 {
        return Err(DagError::dim("matmul", &ash, &bsh));
    }
    let av = a.to_vec();
    let bv = b.to_vec();

    if bsh.len() == 2 {
        // Rows of `a` are independent: treat as one [rows×k]·[k×n] product.
        let rows = numel(&ash[..ash.len() - 1]);
        let mut out = vec![0.0; rows * n];
        gemm_nn(&av, &bv, &mut out, rows, k, n);
        let mut shape = ash[..ash.len() - 1].to_vec();
        shape.push(n);
        return Ok(Tensor::from_op(
            "matmul",
            shape,
            out,
            vec![a.clone(), b.clone()],
            move |g| {
                let mut ga = vec![0.0; rows * k];
                gemm_nt(g, &bv, &mut ga, rows, n, k);
                let mut gb = vec![0.0; k * n];
                gemm_tn(&av, g, &mut gb, k, rows, n);
                vec![Some(ga), Some(gb)]
            },
        ));
    }

    let shared_left = ash.len() == 2;
    if !shared_left && ash[..ash.len() - 2] != bsh[..bsh.len() - 2] {
        return Err(DagError::dim("matmul", &ash, &bsh));
    }
    let batch = numel(&bsh[..bsh.len() - 2]);
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        let aoff = if shared_left { 0 } else { bi * m * k };
        gemm_nn(
            &av[aoff..aoff + m * k],
            &bv[bi * k * n..(bi + 1) * k * n],
            &mut out[bi * m * n..(bi + 1) * m * n],
            m,
            k,
            n,
        );
    }
    let mut shape = bsh[..bsh.len() - 2].to_vec();
    shape.extend([m, n]);
    Ok(Tensor::from_op(
        "matmul",
        shape,
        out,
        vec![a.clone(), b.clone()],
        move |g| {
            let mut ga = vec![0.0; av.len()];
            let mut gb = vec![0.0; bv.len()];
            for bi in 0..batch {
                let aoff = if shared_left { 0 } else { bi * m * k };
                let gs = &g[bi * m * n..(bi + 1) * m * n];
                gemm_nt(
                    gs,
                    &bv[bi * k * n..(bi + 1) * k * n],
                    &mut ga[aoff..aoff + m * k],
                    m,
                    n,
                    k,
                );
                gemm_tn(
                    &av[aoff..aoff + m * k],
                    gs,
                    &mut gb[bi * k * n..(bi + 1) * k * n],
                    k,
                    m,
                    n,
                );
            }
            vec![Some(ga), Some(gb)]
        },
    ))
}

/// General axis permutation.
pub fn permute(x: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    let r = sh.len();
    let mut check = axes.to_vec();
    check.sort_unstable();
    if check != (0..r).collect::<Vec<_>>() {
        return Err(DagError::dim("permute", &sh, axes));
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| sh[a]).collect();
    let mut in_strides = vec![1usize; r];
    for i in (0..r.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * sh[i + 1];
    }
    // index map: out flat position -> in flat position
    let total = x.numel();
    let mut map = Vec::with_capacity(total);
    let mut idx = vec![0usize; r];
    for _ in 0..total {
        let src: usize = (0..r).map(|d| idx[d] * in_strides[axes[d]]).sum();
        map.push(src);
        for d in (0..r).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let xv = x.data();
    let out = map.iter().map(|&s| xv[s]).collect();
    drop(xv);
    Ok(Tensor::from_op("permute", out_shape, out, vec![x.clone()], move |g| {
        let mut gx = vec![0.0; total];
        for (o, &s) in map.iter().enumerate() {
            gx[s] = g[o];
        }
        vec![Some(gx)]
    }))
}

/// Swaps the last two axes.
pub fn transpose(x: &Tensor) -> Result<Tensor> {
    let r = x.rank();
    if r < 2 {
        return Err(DagError::dim("transpose", x.shape(), &[]));
    }
    let mut axes: Vec<usize> = (0..r).collect();
    axes.swap(r - 2, r - 1);
    permute(x, &axes)
}

pub fn reshape(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if numel(shape) != x.numel() || shape.contains(&0) {
        return Err(DagError::dim("reshape", x.shape(), shape));
    }
    Ok(Tensor::from_op(
        "reshape",
        shape.to_vec(),
        x.to_vec(),
        vec![x.clone()],
        |g| vec![Some(g.to_vec())],
    ))
}

/// Collapses everything after the first axis: `[b, ..] -> [b, prod(..)]`.
pub fn flatten(x: &Tensor) -> Result<Tensor> {
    let b = x.shape().first().copied().unwrap_or(1);
    reshape(x, &[b, x.numel() / b])
}

pub fn concat(xs: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| DagError::contract("concat of zero tensors"))?;
    let sh = first.shape().to_vec();
    if axis >= sh.len() {
        return Err(DagError::dim("concat", &sh, &[axis]));
    }
    for t in xs {
        let ts = t.shape();
        if ts.len() != sh.len() || ts[..axis] != sh[..axis] || ts[axis + 1..] != sh[axis + 1..] {
            return Err(DagError::dim("concat", &sh, ts));
        }
    }
    let outer = numel(&sh[..axis]);
    let inner = numel(&sh[axis + 1..]);
    let widths: Vec<usize> = xs.iter().map(|t| t.shape()[axis] * inner).collect();
    let row: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(outer * row);
    let datas: Vec<_> = xs.iter().map(|t| t.data()).collect();
    for o in 0..outer {
        for (d, &w) in datas.iter().zip(&widths) {
            out.extend_from_slice(&d[o * w..(o + 1) * w]);
        }
    }
    drop(datas);
    let mut shape = sh.clone();
    shape[axis] = xs.iter().map(|t| t.shape()[axis]).sum();
    Ok(Tensor::from_op("concat", shape, out, xs.to_vec(), move |g| {
        let mut grads: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(outer * w)).collect();
        for o in 0..outer {
            let mut off = o * row;
            for (gi, &w) in grads.iter_mut().zip(&widths) {
                gi.extend_from_slice(&g[off..off + w]);
                off += w;
            }
        }
        grads.into_iter().map(Some).collect()
    }))
}

/// Inserts a new axis at `axis` and repeats the tensor `n` times along it.
pub fn expand_axis(x: &Tensor, axis: usize, n: usize) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    if axis > sh.len() || n == 0 {
        return Err(DagError::dim("expand_axis", &sh, &[axis, n]));
    }
    let outer = numel(&sh[..axis]);
    let inner = numel(&sh[axis..]);
    let xv = x.data();
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        for _ in 0..n {
            out.extend_from_slice(&xv[o * inner..(o + 1) * inner]);
        }
    }
    drop(xv);
    let mut shape = sh.clone();
    shape.insert(axis, n);
    Ok(Tensor::from_op("expand_axis", shape, out, vec![x.clone()], move |g| {
        let mut gx = vec![0.0; outer * inner];
        for o in 0..outer {
            for r in 0..n {
                let src = &g[(o * n + r) * inner..(o * n + r + 1) * inner];
                gx[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, b)| *a += b);
            }
        }
        vec![Some(gx)]
    }))
}

/// Sliding windows over the last axis: `[.., t] -> [.., m, p]` with
/// `m = (t - p) / stride + 1`. Trailing steps that do not fill a window are
/// dropped.
pub fn unfold_last(x: &Tensor, p: usize, stride: usize) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    let t = *sh.last().ok_or_else(|| DagError::dim("unfold", &sh, &[p]))?;
    if p == 0 || stride == 0 || p > t {
        return Err(DagError::Geometry(format!(
            "patch length {p} / stride {stride} invalid for series length {t}"
        )));
    }
    let m = (t - p) / stride + 1;
    let outer = x.numel() / t;
    let xv = x.data();
    let mut out = Vec::with_capacity(outer * m * p);
    for o in 0..outer {
        let row = &xv[o * t..(o + 1) * t];
        for j in 0..m {
            out.extend_from_slice(&row[j * stride..j * stride + p]);
        }
    }
    drop(xv);
    let mut shape = sh[..sh.len() - 1].to_vec();
    shape.extend([m, p]);
    Ok(Tensor::from_op("unfold", shape, out, vec![x.clone()], move |g| {
        let mut gx = vec![0.0; outer * t];
        for o in 0..outer {
            for j in 0..m {
                let src = &g[(o * m + j) * p..(o * m + j + 1) * p];
                gx[o * t + j * stride..o * t + j * stride + p]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(a, b)| *a += b);
            }
        }
        vec![Some(gx)]
    }))
}

// ---------------------------------------------------------------------------
// reductions and normalization
// ---------------------------------------------------------------------------

pub fn sum(x: &Tensor) -> Tensor {
    let s: f64 = x.data().iter().sum();
    let n = x.numel();
    Tensor::from_op("sum", vec![], vec![s], vec![x.clone()], move |g| {
        vec![Some(vec![g[0]; n])]
    })
}

pub fn mean(x: &Tensor) -> Tensor {
    let n = x.numel();
    let s: f64 = x.data().iter().sum::<f64>() / n as f64;
    Tensor::from_op("mean", vec![], vec![s], vec![x.clone()], move |g| {
        vec![Some(vec![g[0] / n as f64; n])]
    })
}

/// Sums the last axis away: `[.., n] -> [..]`.
pub fn sum_last(x: &Tensor) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    let n = *sh.last().ok_or_else(|| DagError::dim("sum_last", &sh, &[]))?;
    let out: Vec<f64> = x.data().chunks(n).map(|r| r.iter().sum()).collect();
    let shape = if sh.len() == 1 {
        vec![]
    } else {
        sh[..sh.len() - 1].to_vec()
    };
    Ok(Tensor::from_op("sum_last", shape, out, vec![x.clone()], move |g| {
        vec![Some(g.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect())]
    }))
}

/// Mean over one axis, removing it.
pub fn mean_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    if axis >= sh.len() {
        return Err(DagError::dim("mean_axis", &sh, &[axis]));
    }
    let outer = numel(&sh[..axis]);
    let len = sh[axis];
    let inner = numel(&sh[axis + 1..]);
    let xv = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for r in 0..len {
            let src = &xv[(o * len + r) * inner..(o * len + r + 1) * inner];
            out[o * inner..(o + 1) * inner]
                .iter_mut()
                .zip(src)
                .for_each(|(a, b)| *a += b);
        }
    }
    drop(xv);
    out.iter_mut().for_each(|v| *v /= len as f64);
    let mut shape = sh.clone();
    shape.remove(axis);
    Ok(Tensor::from_op("mean_axis", shape, out, vec![x.clone()], move |g| {
        let mut gx = vec![0.0; outer * len * inner];
        for o in 0..outer {
            for r in 0..len {
                for i in 0..inner {
                    gx[(o * len + r) * inner + i] = g[o * inner + i] / len as f64;
                }
            }
        }
        vec![Some(gx)]
    }))
}

/// Dot product of two vectors (rank-1 tensors of equal length).
pub fn dot(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 1 {
        return Err(DagError::dim("dot", a.shape(), b.shape()));
    }
    sum_last(&mul(a, b)?)
}

/// Row-wise dot product over the last axis: `[.., n] x [.., n] -> [..]`.
pub fn dot_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    sum_last(&mul(a, b)?)
}

/// Softmax over the last axis with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    let n = *sh.last().ok_or_else(|| DagError::dim("softmax", &sh, &[]))?;
    let xv = x.data();
    if let Some(bad) = xv.iter().find(|v| !v.is_finite()) {
        return Err(DagError::Numeric {
            op: "softmax",
            msg: format!("non-finite input {bad}"),
        });
    }
    let mut out = Vec::with_capacity(xv.len());
    for row in xv.chunks(n) {
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut z = 0.0;
        for &v in row {
            let e = (v - mx).exp();
            z += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= z);
    }
    drop(xv);
    let yv = out.clone();
    Ok(Tensor::from_op("softmax", sh, out, vec![x.clone()], move |g| {
        let mut gx = Vec::with_capacity(g.len());
        for (grow, yrow) in g.chunks(n).zip(yv.chunks(n)) {
            let s: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
            gx.extend(grow.iter().zip(yrow).map(|(gi, yi)| yi * (gi - s)));
        }
        vec![Some(gx)]
    }))
}

/// Normalizes the last axis to zero mean and unit variance (no affine).
pub fn layer_norm_last(x: &Tensor, eps: f64) -> Result<Tensor> {
    let sh = x.shape().to_vec();
    let n = *sh.last().ok_or_else(|| DagError::dim("layer_norm", &sh, &[]))?;
    let xv = x.data();
    let rows = xv.len() / n;
    let mut out = Vec::with_capacity(xv.len());
    let mut inv_std = Vec::with_capacity(rows);
    for row in xv.chunks(n) {
        let mu = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        out.extend(row.iter().map(|v| (v - mu) * is));
    }
    drop(xv);
    let yv = out.clone();
    Ok(Tensor::from_op("layer_norm", sh, out, vec![x.clone()], move |g| {
        let mut gx = Vec::with_capacity(g.len());
        for ((grow, yrow), &is) in g.chunks(n).zip(yv.chunks(n)).zip(&inv_std) {
            let gm = grow.iter().sum::<f64>() / n as f64;
            let gym = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            gx.extend(grow.iter().zip(yrow).map(|(gi, yi)| is * (gi - gm - yi * gym)));
        }
        vec![Some(gx)]
    }))
}

/// Convex combination of two equally shaped tensors split into `alpha.len()`
/// contiguous groups: group `g` is `alpha[g]·a + (1 − alpha[g])·b`.
pub fn mix(alpha: &Tensor, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mix", a, b)?;
    let groups = alpha.numel();
    if !a.numel().is_multiple_of(groups) {
        return Err(DagError::dim("mix", alpha.shape(), a.shape()));
    }
    let per = a.numel() / groups;
    let (al, av, bv) = (alpha.to_vec(), a.to_vec(), b.to_vec());
    let mut out = Vec::with_capacity(av.len());
    for (gi, &w) in al.iter().enumerate() {
        let r = gi * per..(gi + 1) * per;
        out.extend(av[r.clone()].iter().zip(&bv[r]).map(|(x, y)| w * x + (1.0 - w) * y));
    }
    Ok(Tensor::from_op(
        "mix",
        a.shape().to_vec(),
        out,
        vec![alpha.clone(), a.clone(), b.clone()],
        move |g| {
            let mut galpha = vec![0.0; groups];
            let mut ga = Vec::with_capacity(g.len());
            let mut gb = Vec::with_capacity(g.len());
            for (gi, &w) in al.iter().enumerate() {
                let r = gi * per..(gi + 1) * per;
                for ((gv, x), y) in g[r.clone()].iter().zip(&av[r.clone()]).zip(&bv[r]) {
                    galpha[gi] += gv * (x - y);
                    ga.push(gv * w);
                    gb.push(gv * (1.0 - w));
                }
            }
            vec![Some(galpha), Some(ga), Some(gb)]
        },
    ))
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

/// Mean absolute error. The subgradient at an exact tie is 0.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape("l1_loss", pred, target)?;
    let n = pred.numel() as f64;
    let diff: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data().iter())
        .map(|(p, t)| p - t)
        .collect();
    let loss = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
    Ok(Tensor::from_op(
        "l1_loss",
        vec![],
        vec![loss],
        vec![pred.clone(), target.clone()],
        move |g| {
            let sign: Vec<f64> = diff
                .iter()
                .map(|&d| {
                    if d > 0.0 {
                        g[0] / n
                    } else if d < 0.0 {
                        -g[0] / n
                    } else {
                        0.0
                    }
                })
                .collect();
            let neg = sign.iter().map(|v| -v).collect();
            vec![Some(sign), Some(neg)]
        },
    ))
}

/// Mean squared error.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    same_shape("mse_loss", pred, target)?;
    let n = pred.numel() as f64;
    let diff: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data().iter())
        .map(|(p, t)| p - t)
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok(Tensor::from_op(
        "mse_loss",
        vec![],
        vec![loss],
        vec![pred.clone(), target.clone()],
        move |g| {
            let gp: Vec<f64> = diff.iter().map(|d| 2.0 * d * g[0] / n).collect();
            let gt = gp.iter().map(|v| -v).collect();
            vec![Some(gp), Some(gt)]
        },
    ))
}
