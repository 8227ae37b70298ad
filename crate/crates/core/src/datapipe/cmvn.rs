use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Global per-dimension mean and (population) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct CmvnStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub frame_count: usize,
    /// Dimensions whose variance was raised to [`VARIANCE_FLOOR`].
    pub floored_dims: Vec<usize>,
}

impl CmvnStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn compute_cmvn(corpus: &[Matrix]) -> Result<CmvnStats> {
    let dim = corpus
        .first()
        .map(Matrix::cols)
        .ok_or_else(|| Error::InvalidArgument("CMVN needs a non-empty corpus".into()))?;
    let mut sum = vec![0.0; dim];
    let mut frames = 0usize;
    for x in corpus {
        x.ensure_cols("compute_cmvn", dim)?;
        for row in x.row_iter() {
            sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        frames += x.rows();
    }
    if frames == 0 {
        return Err(Error::InvalidArgument("CMVN corpus has no frames".into()));
    }
    let n = frames as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    // second pass keeps the variance accurate for large offsets
    let mut sq = vec![0.0; dim];
    for x in corpus {
        for row in x.row_iter() {
            for ((s, v), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let mut floored_dims = Vec::new();
    let variance = sq
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let v = s / n;
            if v < VARIANCE_FLOOR {
                floored_dims.push(k);
                VARIANCE_FLOOR
            } else {
                v
            }
        })
        .collect();
    if !floored_dims.is_empty() {
        log::warn!("CMVN variance floored at {VARIANCE_FLOOR:e} for dims {floored_dims:?}");
    }
    Ok(CmvnStats {
        mean,
        variance,
        frame_count: frames,
        floored_dims,
    })
}

pub fn apply_cmvn(x: &Matrix, stats: &CmvnStats) -> Result<Matrix> {
    x.ensure_cols("apply_cmvn", stats.dim())?;
    let inv_std: Vec<f64> = stats.variance.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&stats.mean).zip(&inv_std) {
            *v = (*v - m) * s;
        }
    }
    Ok(out)
}
