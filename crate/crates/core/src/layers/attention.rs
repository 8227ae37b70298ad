use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

use super::{check_len, Layer, Parameters};
use crate::error::{Error, Result};
use crate::numerics::{dot, softmax_masked_in_place, Matrix};

/// Which persistent memory, if any, augments the key/value pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryKind {
    #[default]
    None,
    KeyValue,
    InputEmbedding,
}

impl MemoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::None => "none",
            MemoryKind::KeyValue => "key_value",
            MemoryKind::InputEmbedding => "input_embedding",
        }
    }

    /// Learned scalars contributed by `n` memory slots of width `dim`.
    pub fn param_count(self, n: usize, dim: usize) -> usize {
        match self {
            MemoryKind::None => 0,
            MemoryKind::KeyValue => 2 * n * dim,
            MemoryKind::InputEmbedding => n * dim,
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(MemoryKind::None),
            "key_value" | "kv" => Ok(MemoryKind::KeyValue),
            "input_embedding" | "input" => Ok(MemoryKind::InputEmbedding),
            other => Err(format!(
                "unknown memory variant `{other}` (expected none, key_value or input_embedding)"
            )),
        }
    }
}

/// Persistent memory slots. Key-value slots are appended to the projected
/// keys and values (each head owns a contiguous column block); input-embedding
/// slots are appended to the layer input before the key and value projections.
/// Memory slots never carry a positional encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum MemoryVariant {
    None,
    KeyValue { mem_keys: Matrix, mem_values: Matrix },
    InputEmbedding { mem_inputs: Matrix },
}

impl MemoryVariant {
    /// Uniform on `[−1/√d, 1/√d]`.
    pub fn init<R: Rng + ?Sized>(kind: MemoryKind, n: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        match kind {
            MemoryKind::None => MemoryVariant::None,
            MemoryKind::KeyValue => MemoryVariant::KeyValue {
                mem_keys: Matrix::uniform(n, dim, bound, rng),
                mem_values: Matrix::uniform(n, dim, bound, rng),
            },
            MemoryKind::InputEmbedding => MemoryVariant::InputEmbedding {
                mem_inputs: Matrix::uniform(n, dim, bound, rng),
            },
        }
    }

    pub fn kind(&self) -> MemoryKind {
        match self {
            MemoryVariant::None => MemoryKind::None,
            MemoryVariant::KeyValue { .. } => MemoryKind::KeyValue,
            MemoryVariant::InputEmbedding { .. } => MemoryKind::InputEmbedding,
        }
    }

    pub fn n_vectors(&self) -> usize {
        match self {
            MemoryVariant::None => 0,
            MemoryVariant::KeyValue { mem_keys, .. } => mem_keys.rows(),
            MemoryVariant::InputEmbedding { mem_inputs } => mem_inputs.rows(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            MemoryVariant::None => 0,
            MemoryVariant::KeyValue { mem_keys, mem_values } => mem_keys.len() + mem_values.len(),
            MemoryVariant::InputEmbedding { mem_inputs } => mem_inputs.len(),
        }
    }

    fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        match self {
            MemoryVariant::None => MemoryVariant::None,
            MemoryVariant::KeyValue { mem_keys, mem_values } => MemoryVariant::KeyValue {
                mem_keys: z(mem_keys),
                mem_values: z(mem_values),
            },
            MemoryVariant::InputEmbedding { mem_inputs } => MemoryVariant::InputEmbedding {
                mem_inputs: z(mem_inputs),
            },
        }
    }
}

/// `softmax(q·kᵀ / √d_k) · v`.
pub fn self_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    k.ensure_cols("self_attention keys", q.cols())?;
    v.ensure_cols("self_attention values", q.cols())?;
    if k.rows() != v.rows() {
        return Err(Error::shape(
            "self_attention",
            format!("{} value rows", k.rows()),
            v.rows(),
        ));
    }
    if k.rows() == 0 {
        return Err(Error::shape("self_attention", "at least one key", 0));
    }
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut scores = q.matmul_t(k)?.scale(scale);
    for r in 0..scores.rows() {
        softmax_masked_in_place(scores.row_mut(r), |_| true);
    }
    scores.matmul(v)
}

/// Multi-head attention projections with optional persistent memory.
/// `wq`, `wk`, `wv` are `d × d`; head `i` owns columns `i·d_k .. (i+1)·d_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub heads: usize,
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub memory: MemoryVariant,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Matrix,
    augmented: Option<Matrix>,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    concat: Matrix,
    len: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized, M: Rng + ?Sized>(
        dim: usize,
        heads: usize,
        memory: MemoryKind,
        memory_n: usize,
        rng: &mut R,
        memory_rng: &mut M,
    ) -> Self {
        Self {
            heads,
            wq: Matrix::xavier(dim, dim, rng),
            wk: Matrix::xavier(dim, dim, rng),
            wv: Matrix::xavier(dim, dim, rng),
            wo: Matrix::xavier(dim, dim, rng),
            memory: MemoryVariant::init(memory, memory_n, dim, memory_rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn head_dim(&self) -> usize {
        self.dim() / self.heads
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimension {d} is not divisible by {} heads",
                self.heads
            )));
        }
        for (name, m) in [("wq", &self.wq), ("wk", &self.wk), ("wv", &self.wv), ("wo", &self.wo)] {
            if m.shape() != (d, d) {
                return Err(Error::shape("MultiHeadAttention", format!("{name} {d}x{d}"), format!("{:?}", m.shape())));
            }
        }
        match &self.memory {
            MemoryVariant::None => Ok(()),
            MemoryVariant::KeyValue { mem_keys, mem_values } => {
                mem_keys.ensure_cols("key-value memory keys", d)?;
                mem_values.ensure_shape("key-value memory values", mem_keys.rows(), d)
            }
            MemoryVariant::InputEmbedding { mem_inputs } => {
                mem_inputs.ensure_cols("input-embedding memory", d)
            }
        }
    }

    /// Full key and value pools (`(T + N) × d`) plus the augmented input for
    /// the input-embedding variant.
    fn keys_values(&self, x: &Matrix) -> Result<(Matrix, Matrix, Option<Matrix>)> {
        match &self.memory {
            MemoryVariant::None => Ok((x.matmul(&self.wk)?, x.matmul(&self.wv)?, None)),
            MemoryVariant::KeyValue { mem_keys, mem_values } => Ok((
                x.matmul(&self.wk)?.vstack(mem_keys)?,
                x.matmul(&self.wv)?.vstack(mem_values)?,
                None,
            )),
            MemoryVariant::InputEmbedding { mem_inputs } => {
                let aug = x.vstack(mem_inputs)?;
                Ok((aug.matmul(&self.wk)?, aug.matmul(&self.wv)?, Some(aug)))
            }
        }
    }

    fn per_head(&self, m: &Matrix, head: usize) -> Matrix {
        let dk = self.head_dim();
        m.column_block(head * dk..(head + 1) * dk)
    }

    fn split_heads(&self, k: &Matrix, v: &Matrix) -> Vec<(Matrix, Matrix)> {
        (0..self.heads)
            .map(|h| (self.per_head(k, h), self.per_head(v, h)))
            .collect()
    }

    /// Per-head attention weights, `T × (T + N)`.
    pub fn attention_weights(&self, x: &Matrix, len: usize) -> Result<Vec<Matrix>> {
        Ok(self.forward_cached(x, len, None)?.1.probs)
    }

    fn zeros_like(&self) -> Self {
        let d = self.dim();
        Self {
            heads: self.heads,
            wq: Matrix::zeros(d, d),
            wk: Matrix::zeros(d, d),
            wv: Matrix::zeros(d, d),
            wo: Matrix::zeros(d, d),
            memory: self.memory.zeros_like(),
        }
    }
}

/// Per-head `(K_m, V_m)` for a key-value memory layer: projected frames followed
/// by that head's column block of the memory keys and values.
pub fn kv_memory_keys_values(x: &Matrix, layer: &MultiHeadAttention) -> Result<Vec<(Matrix, Matrix)>> {
    if layer.memory.kind() != MemoryKind::KeyValue {
        return Err(Error::InvalidArgument(format!(
            "layer has {} memory, expected key_value",
            layer.memory.kind()
        )));
    }
    layer.validate()?;
    x.ensure_cols("kv_memory_keys_values", layer.dim())?;
    let (k, v, _) = layer.keys_values(x)?;
    Ok(layer.split_heads(&k, &v))
}

/// Per-head `(K_m, V_m)` for an input-embedding memory layer: the key and value
/// projections of the frames followed by the memory slots.
pub fn input_memory_keys_values(x: &Matrix, layer: &MultiHeadAttention) -> Result<Vec<(Matrix, Matrix)>> {
    if layer.memory.kind() != MemoryKind::InputEmbedding {
        return Err(Error::InvalidArgument(format!(
            "layer has {} memory, expected input_embedding",
            layer.memory.kind()
        )));
    }
    layer.validate()?;
    x.ensure_cols("input_memory_keys_values", layer.dim())?;
    let (k, v, _) = layer.keys_values(x)?;
    Ok(layer.split_heads(&k, &v))
}

impl Parameters for MultiHeadAttention {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("wq".to_string(), &self.wq),
            ("wk".to_string(), &self.wk),
            ("wv".to_string(), &self.wv),
            ("wo".to_string(), &self.wo),
        ];
        match &self.memory {
            MemoryVariant::None => {}
            MemoryVariant::KeyValue { mem_keys, mem_values } => {
                out.push(("mem_keys".into(), mem_keys));
                out.push(("mem_values".into(), mem_values));
            }
            MemoryVariant::InputEmbedding { mem_inputs } => {
                out.push(("mem_inputs".into(), mem_inputs));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo];
        match &mut self.memory {
            MemoryVariant::None => {}
            MemoryVariant::KeyValue { mem_keys, mem_values } => {
                out.push(mem_keys);
                out.push(mem_values);
            }
            MemoryVariant::InputEmbedding { mem_inputs } => out.push(mem_inputs),
        }
        out
    }
}

impl Layer for MultiHeadAttention {
    type Cache = AttentionCache;

    /// Queries come from `x` only; keys at frame index `>= len` are masked out,
    /// memory slots are always visible. Output rows from `len` on are zero.
    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        _rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, AttentionCache)> {
        self.validate()?;
        check_len("MultiHeadAttention", x, len)?;
        x.ensure_cols("MultiHeadAttention input", self.dim())?;
        let t = x.rows();
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();

        let q = x.matmul(&self.wq)?;
        let (k, v, augmented) = self.keys_values(x)?;
        let n_keys = k.rows();
        let visible = |j: usize| j < len || j >= t;

        let mut concat = Matrix::zeros(t, self.dim());
        let mut probs = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = self.per_head(&q, head);
            let kh = self.per_head(&k, head);
            let vh = self.per_head(&v, head);
            let mut p = Matrix::zeros(t, n_keys);
            for r in 0..t {
                let row = p.row_mut(r);
                for (j, s) in row.iter_mut().enumerate() {
                    *s = dot(qh.row(r), kh.row(j)) * scale;
                }
                softmax_masked_in_place(row, visible);
            }
            concat.set_column_block(head * dk, &p.matmul(&vh)?);
            probs.push(p);
        }
        let mut out = concat.matmul(&self.wo)?;
        out.zero_rows_from(len);
        Ok((
            out,
            AttentionCache {
                x: x.clone(),
                augmented,
                q,
                k,
                v,
                probs,
                concat,
                len,
            },
        ))
    }

    fn backward(&self, cache: &AttentionCache, grad_out: &Matrix) -> Result<(Matrix, Self)> {
        let x = &cache.x;
        let t = x.rows();
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        grad_out.ensure_shape("MultiHeadAttention::backward", t, self.dim())?;

        let mut grad_out = grad_out.clone();
        grad_out.zero_rows_from(cache.len);
        let mut grads = self.zeros_like();
        grads.wo = cache.concat.t_matmul(&grad_out)?;
        let d_concat = grad_out.matmul_t(&self.wo)?;

        let mut dq = Matrix::zeros(t, self.dim());
        let mut dk_all = Matrix::zeros(cache.k.rows(), self.dim());
        let mut dv_all = Matrix::zeros(cache.v.rows(), self.dim());
        for head in 0..self.heads {
            let dh = self.per_head(&d_concat, head);
            let p = &cache.probs[head];
            let qh = self.per_head(&cache.q, head);
            let kh = self.per_head(&cache.k, head);
            let vh = self.per_head(&cache.v, head);

            let dp = dh.matmul_t(&vh)?;
            let dvh = p.t_matmul(&dh)?;
            let mut ds = Matrix::zeros(p.rows(), p.cols());
            for r in 0..p.rows() {
                let pr = p.row(r);
                let dpr = dp.row(r);
                let inner = dot(pr, dpr);
                for (j, s) in ds.row_mut(r).iter_mut().enumerate() {
                    *s = pr[j] * (dpr[j] - inner) * scale;
                }
            }
            dq.set_column_block(head * dk, &ds.matmul(&kh)?);
            dk_all.set_column_block(head * dk, &ds.t_matmul(&qh)?);
            dv_all.set_column_block(head * dk, &dvh);
        }

        grads.wq = x.t_matmul(&dq)?;
        let mut dx = dq.matmul_t(&self.wq)?;
        match &self.memory {
            MemoryVariant::None | MemoryVariant::KeyValue { .. } => {
                let dk_frames = dk_all.row_block(0..t);
                let dv_frames = dv_all.row_block(0..t);
                grads.wk = x.t_matmul(&dk_frames)?;
                grads.wv = x.t_matmul(&dv_frames)?;
                dx.add_assign(&dk_frames.matmul_t(&self.wk)?)?;
                dx.add_assign(&dv_frames.matmul_t(&self.wv)?)?;
                if let MemoryVariant::KeyValue { mem_keys, mem_values } = &mut grads.memory {
                    let rows = t..dk_all.rows();
                    *mem_keys = dk_all.row_block(rows.clone());
                    *mem_values = dv_all.row_block(rows);
                }
            }
            MemoryVariant::InputEmbedding { .. } => {
                let aug = cache
                    .augmented
                    .as_ref()
                    .expect("input-embedding cache holds the augmented input");
                grads.wk = aug.t_matmul(&dk_all)?;
                grads.wv = aug.t_matmul(&dv_all)?;
                let mut d_aug = dk_all.matmul_t(&self.wk)?;
                d_aug.add_assign(&dv_all.matmul_t(&self.wv)?)?;
                dx.add_assign(&d_aug.row_block(0..t))?;
                if let MemoryVariant::InputEmbedding { mem_inputs } = &mut grads.memory {
                    *mem_inputs = d_aug.row_block(t..aug.rows());
                }
            }
        }
        Ok((dx, grads))
    }
}
