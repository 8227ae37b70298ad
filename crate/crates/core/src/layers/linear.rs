use rand::{Rng, RngCore};

use super::{check_len, Layer, Parameters};
use crate::error::Result;
use crate::numerics::Matrix;

/// Affine map `x · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    x: Matrix,
    len: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: Matrix::xavier(input, output, rng),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

impl Parameters for Linear {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl Layer for Linear {
    type Cache = LinearCache;

    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        _rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, LinearCache)> {
        check_len("Linear", x, len)?;
        x.ensure_cols("Linear", self.input_dim())?;
        let mut out = x.matmul(&self.weight)?.add_row_broadcast(&self.bias)?;
        out.zero_rows_from(len);
        Ok((out, LinearCache { x: x.clone(), len }))
    }

    fn backward(&self, cache: &LinearCache, grad_out: &Matrix) -> Result<(Matrix, Self)> {
        let mut g = grad_out.clone();
        g.zero_rows_from(cache.len);
        let grads = Linear {
            weight: cache.x.t_matmul(&g)?,
            bias: g.column_sums(),
        };
        Ok((g.matmul_t(&self.weight)?, grads))
    }
}
