use rand::RngCore;

use super::{check_len, Layer, Parameters};
use crate::error::Result;
use crate::numerics::{layer_norm_with_stats, Matrix, RowNormStats};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Matrix,
    pub bias: Matrix,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    stats: RowNormStats,
    len: usize,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: Matrix::filled(1, dim, 1.0),
            bias: Matrix::zeros(1, dim),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.cols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            gain: Matrix::zeros(1, self.dim()),
            bias: Matrix::zeros(1, self.dim()),
            eps: self.eps,
        }
    }
}

impl Parameters for LayerNorm {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("gain".into(), &self.gain), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.gain, &mut self.bias]
    }
}

impl Layer for LayerNorm {
    type Cache = LayerNormCache;

    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        _rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, LayerNormCache)> {
        check_len("LayerNorm", x, len)?;
        let (mut out, stats) = layer_norm_with_stats(x, self.gain.data(), self.bias.data(), self.eps)?;
        out.zero_rows_from(len);
        Ok((out, LayerNormCache { stats, len }))
    }

    fn backward(&self, cache: &LayerNormCache, grad_out: &Matrix) -> Result<(Matrix, Self)> {
        let d = self.dim();
        let xhat = &cache.stats.normalized;
        grad_out.ensure_shape("LayerNorm::backward", xhat.rows(), d)?;
        let mut grads = self.zeros_like();
        let mut dx = Matrix::zeros(xhat.rows(), d);
        let gain = self.gain.data();
        for r in 0..cache.len {
            let dy = grad_out.row(r);
            let xh = xhat.row(r);
            let mut mean_g = 0.0;
            let mut mean_gx = 0.0;
            for c in 0..d {
                let g = dy[c] * gain[c];
                mean_g += g;
                mean_gx += g * xh[c];
                grads.gain.data_mut()[c] += dy[c] * xh[c];
                grads.bias.data_mut()[c] += dy[c];
            }
            mean_g /= d as f64;
            mean_gx /= d as f64;
            let istd = cache.stats.inv_std[r];
            let dxr = dx.row_mut(r);
            for c in 0..d {
                dxr[c] = istd * (dy[c] * gain[c] - mean_g - xh[c] * mean_gx);
            }
        }
        Ok((dx, grads))
    }
}
