use rand::{Rng, RngCore};

use super::attention::AttentionCache;
use super::ffn::FeedForwardCache;
use super::norm::LayerNormCache;
use super::{
    apply_mask, check_len, dropout_mask, FeedForward, Layer, LayerNorm, MemoryKind,
    MultiHeadAttention, Parameters,
};
use crate::error::Result;
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct FfnSublayer {
    pub ffn: FeedForward,
    pub norm: LayerNorm,
}

/// Post-norm self-attention layer:
/// `n₁ = LN(x + drop(MHA(x)))`, then optionally `LN(n₁ + drop(FFN(n₁)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    pub attention: MultiHeadAttention,
    pub attn_norm: LayerNorm,
    pub ffn: Option<FfnSublayer>,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone)]
pub struct AttentionLayerCache {
    attn: AttentionCache,
    attn_mask: Option<Matrix>,
    attn_norm: LayerNormCache,
    ffn: Option<(FeedForwardCache, Option<Matrix>, LayerNormCache)>,
    len: usize,
}

impl AttentionLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized, M: Rng + ?Sized>(
        dim: usize,
        heads: usize,
        ffn_dim: Option<usize>,
        memory: MemoryKind,
        memory_n: usize,
        dropout_rate: f64,
        rng: &mut R,
        memory_rng: &mut M,
    ) -> Self {
        let attention = MultiHeadAttention::new(dim, heads, memory, memory_n, rng, memory_rng);
        let ffn = ffn_dim.map(|inner| FfnSublayer {
            ffn: FeedForward::new(dim, inner, rng),
            norm: LayerNorm::new(dim),
        });
        Self {
            attention,
            attn_norm: LayerNorm::new(dim),
            ffn,
            dropout_rate,
        }
    }

    pub fn dim(&self) -> usize {
        self.attention.dim()
    }

    pub fn memory_params(&self) -> usize {
        self.attention.memory.num_params()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.params_mut() {
            m.data_mut().fill(0.0);
        }
        z
    }
}

/// Runs a full attention layer (deterministic, no dropout) over an unpadded sequence.
pub fn multi_head_attention(x: &Matrix, layer: &AttentionLayer) -> Result<Matrix> {
    layer.forward(x, x.rows())
}

impl Parameters for AttentionLayer {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = Vec::new();
        for (n, m) in self.attention.params() {
            out.push((format!("attn.{n}"), m));
        }
        for (n, m) in self.attn_norm.params() {
            out.push((format!("attn_norm.{n}"), m));
        }
        if let Some(f) = &self.ffn {
            for (n, m) in f.ffn.params() {
                out.push((format!("ffn.{n}"), m));
            }
            for (n, m) in f.norm.params() {
                out.push((format!("ffn_norm.{n}"), m));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.attention.params_mut();
        out.extend(self.attn_norm.params_mut());
        if let Some(f) = &mut self.ffn {
            out.extend(f.ffn.params_mut());
            out.extend(f.norm.params_mut());
        }
        out
    }
}

impl Layer for AttentionLayer {
    type Cache = AttentionLayerCache;

    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, AttentionLayerCache)> {
        check_len("AttentionLayer", x, len)?;
        let (a, attn) = self.attention.forward_cached(x, len, None)?;
        let attn_mask = dropout_mask(a.rows(), a.cols(), self.dropout_rate, rng.as_deref_mut());
        let r1 = x.add(&apply_mask(&a, attn_mask.as_ref()))?;
        let (mut out, attn_norm) = self.attn_norm.forward_cached(&r1, len, None)?;

        let ffn = match &self.ffn {
            Some(sub) => {
                let (f, ffn_cache) = sub.ffn.forward_cached(&out, len, None)?;
                let mask = dropout_mask(f.rows(), f.cols(), self.dropout_rate, rng.as_deref_mut());
                let r2 = out.add(&apply_mask(&f, mask.as_ref()))?;
                let (n2, norm_cache) = sub.norm.forward_cached(&r2, len, None)?;
                out = n2;
                Some((ffn_cache, mask, norm_cache))
            }
            None => None,
        };
        out.zero_rows_from(len);
        Ok((
            out,
            AttentionLayerCache {
                attn,
                attn_mask,
                attn_norm,
                ffn,
                len,
            },
        ))
    }

    fn backward(&self, cache: &AttentionLayerCache, grad_out: &Matrix) -> Result<(Matrix, Self)> {
        let mut grads = self.zeros_like();
        let mut g = grad_out.clone();
        g.zero_rows_from(cache.len);

        if let (Some(sub), Some((ffn_cache, mask, norm_cache))) = (&self.ffn, &cache.ffn) {
            let (dr2, norm_grads) = sub.norm.backward(norm_cache, &g)?;
            let (dn1, ffn_grads) = sub.ffn.backward(ffn_cache, &apply_mask(&dr2, mask.as_ref()))?;
            let gsub = grads.ffn.as_mut().expect("ffn grads mirror ffn params");
            gsub.norm = norm_grads;
            gsub.ffn = ffn_grads;
            g = dr2.add(&dn1)?;
        }

        let (dr1, norm_grads) = self.attn_norm.backward(&cache.attn_norm, &g)?;
        grads.attn_norm = norm_grads;
        let (dx_attn, attn_grads) = self
            .attention
            .backward(&cache.attn, &apply_mask(&dr1, cache.attn_mask.as_ref()))?;
        grads.attention = attn_grads;
        Ok((dr1.add(&dx_attn)?, grads))
    }
}
