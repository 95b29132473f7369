//! Patch-wise temporal tokens and series-wise channel tokens.

use serde::{Deserialize, Serialize};

use crate::autograd::{self as ag, Tensor};
use crate::error::{DagError, Result};
use crate::layers::ParamBuilder;

/// Lookback length, patch length and stride of a patch tokenizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub lookback: usize,
    pub patch_len: usize,
    pub stride: usize,
}

impl PatchGeometry {
    pub fn new(lookback: usize, patch_len: usize, stride: usize) -> Result<Self> {
        if patch_len == 0 || stride == 0 || lookback == 0 {
            return Err(DagError::Geometry("extents must be positive".into()));
        }
        if patch_len > lookback {
            return Err(DagError::Geometry(format!(
                "patch length {patch_len} exceeds lookback {lookback}"
            )));
        }
        Ok(PatchGeometry {
            lookback,
            patch_len,
            stride,
        })
    }

    /// Non-overlapping patches.
    pub fn non_overlapping(lookback: usize, patch_len: usize) -> Result<Self> {
        Self::new(lookback, patch_len, patch_len)
    }

    pub fn patch_count(&self) -> usize {
        (self.lookback - self.patch_len) / self.stride + 1
    }
}

/// Splits the last axis into patches: `[.., T] -> [.., M, P]`.
pub fn patchify(series: &Tensor, geom: &PatchGeometry) -> Result<Tensor> {
    let t = series.shape().last().copied().unwrap_or(0);
    if t != geom.lookback {
        return Err(DagError::dim("patchify", series.shape(), &[geom.lookback]));
    }
    ag::unfold_last(series, geom.patch_len, geom.stride)
}

#[derive(Clone, Debug)]
pub struct PatchEmbedParams {
    /// `[P×d]`
    pub projection: Tensor,
    /// `[M×d]`, learned.
    pub positional: Tensor,
}

impl PatchEmbedParams {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, geom: &PatchGeometry, d_model: usize) -> Result<Self> {
        let p = geom.patch_len;
        let projection = pb.uniform(format!("{prefix}.patch_proj"), &[p, d_model], p)?;
        let positional = pb.uniform_bound(format!("{prefix}.pos_embed"), &[geom.patch_count(), d_model], 0.02)?;
        Ok(PatchEmbedParams { projection, positional })
    }
}

/// `patches·projection + positional` for patches `[.., M, P]`.
pub fn patch_embed(patches: &Tensor, params: &PatchEmbedParams) -> Result<Tensor> {
    let sh = patches.shape();
    let m = sh[sh.len().saturating_sub(2)];
    if sh.len() < 2 || m != params.positional.shape()[0] {
        return Err(DagError::dim("patch_embed", sh, params.positional.shape()));
    }
    let proj = ag::matmul(patches, &params.projection)?;
    ag::add_trailing(&proj, &params.positional)
}

#[derive(Clone, Debug)]
pub struct SeriesEmbedParams {
    /// `[L×d]`
    pub projection: Tensor,
}

impl SeriesEmbedParams {
    pub fn new(pb: &mut ParamBuilder, prefix: &str, len: usize, d_model: usize) -> Result<Self> {
        let projection = pb.uniform(format!("{prefix}.series_proj"), &[len, d_model], len)?;
        Ok(SeriesEmbedParams { projection })
    }
}

/// Maps each channel's full series to one token: `[.., C, L] -> [.., C, d]`.
pub fn series_embed(series: &Tensor, params: &SeriesEmbedParams) -> Result<Tensor> {
    let l = series.shape().last().copied().unwrap_or(0);
    if l != params.projection.shape()[0] {
        return Err(DagError::dim("series_embed", series.shape(), params.projection.shape()));
    }
    ag::matmul(series, &params.projection)
}
