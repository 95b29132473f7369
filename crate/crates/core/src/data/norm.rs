//! Per-row z-scoring with statistics taken from a lookback segment.

/// Variance below this is treated as a constant series (std clamped to 1).
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn rows(&self) -> usize {
        self.mean.len()
    }

    /// Identity transform for `rows` rows.
    pub fn identity(rows: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; rows],
            std: vec![1.0; rows],
        }
    }
}

/// Statistics of each row of a row-major `[rows × len]` buffer.
pub fn normalize_stats(x: &[f64], len: usize) -> ChannelStats {
    let mut mean = Vec::with_capacity(x.len() / len);
    let mut std = Vec::with_capacity(x.len() / len);
    for row in x.chunks(len) {
        // shifted by the first value so constant rows have an exact mean
        let x0 = row[0];
        let mu = x0 + row.iter().map(|v| v - x0).sum::<f64>() / len as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / len as f64;
        mean.push(mu);
        std.push(if var < MIN_VARIANCE { 1.0 } else { var.sqrt() });
    }
    ChannelStats { mean, std }
}

/// `(x − mean) / std` row by row; rows of `x` may have any length.
pub fn apply(x: &[f64], stats: &ChannelStats) -> Vec<f64> {
    let len = x.len() / stats.rows();
    x.chunks(len)
        .zip(stats.mean.iter().zip(&stats.std))
        .flat_map(|(row, (m, s))| row.iter().map(move |v| (v - m) / s))
        .collect()
}

/// Inverse of [`apply`].
pub fn invert(z: &[f64], stats: &ChannelStats) -> Vec<f64> {
    let len = z.len() / stats.rows();
    z.chunks(len)
        .zip(stats.mean.iter().zip(&stats.std))
        .flat_map(|(row, (m, s))| row.iter().map(move |v| v * s + m))
        .collect()
}
