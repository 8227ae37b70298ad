use rand::{Rng, RngCore};

use super::{check_len, Layer, Parameters};
use crate::error::Result;
use crate::numerics::Matrix;

/// Position-wise `ReLU(x·W₁ + b₁)·W₂ + b₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub w_in: Matrix,
    pub b_in: Matrix,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Matrix,
    pre: Matrix,
    act: Matrix,
    len: usize,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(dim: usize, inner: usize, rng: &mut R) -> Self {
        Self {
            w_in: Matrix::xavier(dim, inner, rng),
            b_in: Matrix::zeros(1, inner),
            w_out: Matrix::xavier(inner, dim, rng),
            b_out: Matrix::zeros(1, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_in.rows()
    }

    pub fn inner_dim(&self) -> usize {
        self.w_in.cols()
    }
}

impl Parameters for FeedForward {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("w_in".into(), &self.w_in),
            ("b_in".into(), &self.b_in),
            ("w_out".into(), &self.w_out),
            ("b_out".into(), &self.b_out),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w_in, &mut self.b_in, &mut self.w_out, &mut self.b_out]
    }
}

impl Layer for FeedForward {
    type Cache = FeedForwardCache;

    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        _rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, FeedForwardCache)> {
        check_len("FeedForward", x, len)?;
        x.ensure_cols("FeedForward", self.dim())?;
        let pre = x.matmul(&self.w_in)?.add_row_broadcast(&self.b_in)?;
        let act = pre.map(|v| v.max(0.0));
        let mut out = act.matmul(&self.w_out)?.add_row_broadcast(&self.b_out)?;
        out.zero_rows_from(len);
        Ok((
            out,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
                len,
            },
        ))
    }

    fn backward(&self, cache: &FeedForwardCache, grad_out: &Matrix) -> Result<(Matrix, Self)> {
        let mut g = grad_out.clone();
        g.zero_rows_from(cache.len);
        let w_out = cache.act.t_matmul(&g)?;
        let b_out = g.column_sums();
        let mut d_act = g.matmul_t(&self.w_out)?;
        for (d, &p) in d_act.data_mut().iter_mut().zip(cache.pre.data()) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        let grads = FeedForward {
            w_in: cache.x.t_matmul(&d_act)?,
            b_in: d_act.column_sums(),
            w_out,
            b_out,
        };
        Ok((d_act.matmul_t(&self.w_in)?, grads))
    }
}
