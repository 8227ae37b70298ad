//! Forward and backward passes for every layer in the acoustic model.
//!
//! Each layer returns an opaque cache from its forward pass; the backward pass
//! consumes that cache and returns the input gradient plus a parameter
//! gradient shaped exactly like the layer itself. Every layer takes a valid
//! length `len`: rows at or beyond it are padding, contribute nothing to valid
//! rows and come out zeroed.

mod attention;
mod check;
mod dfsmn;
mod ffn;
mod linear;
mod norm;
mod positional;
mod san;

pub use attention::{
    input_memory_keys_values, kv_memory_keys_values, self_attention, MemoryKind, MemoryVariant,
    MultiHeadAttention,
};
pub use check::{check_layer, LayerCheck};
pub use dfsmn::{dfsmn_block_forward, dfsmn_memory, DfsmnBlock};
pub use ffn::FeedForward;
pub use linear::Linear;
pub use norm::LayerNorm;
pub use positional::{positional_encode, PositionalEncoding};
pub use san::{multi_head_attention, AttentionLayer, FfnSublayer};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Ordered, named access to a layer's trainable tensors.
pub trait Parameters {
    fn params(&self) -> Vec<(String, &Matrix)>;
    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|(_, m)| m.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, m) in self.params() {
            out.extend_from_slice(m.data());
        }
        out
    }

    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if values.len() != expected {
            return Err(Error::shape("assign_flat", expected, values.len()));
        }
        let mut offset = 0;
        for m in self.params_mut() {
            let n = m.len();
            m.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// A differentiable sequence layer.
pub trait Layer: Parameters + Clone {
    type Cache;

    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, Self::Cache)>;

    /// Returns `(input gradient, parameter gradients)`.
    fn backward(&self, cache: &Self::Cache, grad_out: &Matrix) -> Result<(Matrix, Self)>;

    fn forward(&self, x: &Matrix, len: usize) -> Result<Matrix> {
        self.forward_cached(x, len, None).map(|(out, _)| out)
    }
}

pub(crate) fn check_len(op: &'static str, x: &Matrix, len: usize) -> Result<()> {
    if len > x.rows() {
        return Err(Error::shape(op, format!("len <= {}", x.rows()), len));
    }
    Ok(())
}

/// Inverted-dropout mask; `None` when dropout is inactive.
pub(crate) fn dropout_mask<R: RngCore + ?Sized>(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: Option<&mut R>,
) -> Option<Matrix> {
    use rand::Rng;
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data).ok()
}

pub(crate) fn apply_mask(m: &Matrix, mask: Option<&Matrix>) -> Matrix {
    match mask {
        Some(mask) => m.hadamard(mask).expect("dropout mask shape"),
        None => m.clone(),
    }
}
