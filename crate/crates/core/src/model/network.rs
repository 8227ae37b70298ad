use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{param_count, ModelConfig, ModelKind};
use crate::ctc::{ctc_loss, CtcTarget};
use crate::datapipe::{Frontend, SequenceBatch};
use crate::error::{Error, Result};
use crate::layers::{AttentionLayer, DfsmnBlock, Layer, Linear, Parameters, PositionalEncoding};
use crate::numerics::{log_softmax_rows, Matrix};

const WEIGHT_STREAM: u64 = 0;
const MEMORY_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerTag {
    Dfsmn,
    San,
}

impl fmt::Display for LayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerTag::Dfsmn => "D",
            LayerTag::San => "S",
        })
    }
}

/// Tag sequence the construction rule prescribes for `cfg`.
pub fn expected_tags(cfg: &ModelConfig) -> Vec<LayerTag> {
    match cfg.kind {
        ModelKind::DfsmnSan => {
            let every = cfg.san_insert_every.max(1);
            (0..cfg.dfsmn_blocks_total / every)
                .flat_map(|_| std::iter::repeat_n(LayerTag::Dfsmn, every).chain([LayerTag::San]))
                .collect()
        }
        ModelKind::Dfsmn => vec![LayerTag::Dfsmn; cfg.dfsmn_blocks_total],
        ModelKind::San => vec![LayerTag::San; cfg.san_layers_pure],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelLayer {
    Dfsmn(DfsmnBlock),
    San(AttentionLayer),
}

impl ModelLayer {
    pub fn tag(&self) -> LayerTag {
        match self {
            ModelLayer::Dfsmn(_) => LayerTag::Dfsmn,
            ModelLayer::San(_) => LayerTag::San,
        }
    }
}

impl Parameters for ModelLayer {
    fn params(&self) -> Vec<(String, &Matrix)> {
        match self {
            ModelLayer::Dfsmn(b) => b.params(),
            ModelLayer::San(s) => s.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            ModelLayer::Dfsmn(b) => b.params_mut(),
            ModelLayer::San(s) => s.params_mut(),
        }
    }
}

/// An acoustic model: optional input projection (SAN-only), the tagged layer
/// stack and a linear projection to label logits, plus the input pipeline the
/// weights were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    pub input_projection: Option<Linear>,
    pub layers: Vec<ModelLayer>,
    pub output: Linear,
    pub frontend: Frontend,
}

enum LayerCache {
    Dfsmn(<DfsmnBlock as Layer>::Cache),
    San(<AttentionLayer as Layer>::Cache),
}

/// Forward state needed by [`Model::backward`].
pub struct ModelCache {
    input_projection: Option<<Linear as Layer>::Cache>,
    layers: Vec<LayerCache>,
    output: <Linear as Layer>::Cache,
}

fn reborrow<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Alternating DFSMN/attention stack. Base weights come from one random
/// stream and memory slots from another, so models differing only in their
/// memory variant share every other weight.
pub fn build_dfsmn_san(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    if cfg.kind != ModelKind::DfsmnSan {
        return Err(Error::config("model.kind", format!("build_dfsmn_san needs dfsmn_san, got {}", cfg.kind)));
    }
    build(cfg, seed)
}

/// DFSMN-only or SAN-only baseline stack.
pub fn build_pure(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    if cfg.kind == ModelKind::DfsmnSan {
        return Err(Error::config("model.kind", "build_pure needs dfsmn or san"));
    }
    build(cfg, seed)
}

fn build(cfg: &ModelConfig, seed: u64) -> Result<Model> {
    cfg.validate()?;
    let mut rng = stream(seed, WEIGHT_STREAM);
    let mut mem_rng = stream(seed, MEMORY_STREAM);
    let ffn_dim = cfg.ffn_in_san.then_some(cfg.d_ff);
    let mut san = |rng: &mut ChaCha8Rng| {
        ModelLayer::San(AttentionLayer::new(
            cfg.model_dim,
            cfg.heads,
            ffn_dim,
            cfg.memory_variant,
            cfg.memory_n,
            cfg.dropout,
            rng,
            &mut mem_rng,
        ))
    };
    let input_projection = (cfg.kind == ModelKind::San).then(|| Linear::new(cfg.input_dim, cfg.model_dim, &mut rng));
    let mut layers = Vec::new();
    let mut width = cfg.input_dim;
    for tag in expected_tags(cfg) {
        let layer = match tag {
            LayerTag::Dfsmn => {
                let b = DfsmnBlock::new(
                    width,
                    cfg.hidden_units,
                    cfg.projection_dim,
                    cfg.lookback_order,
                    cfg.lookahead_order,
                    &mut rng,
                );
                width = cfg.projection_dim;
                ModelLayer::Dfsmn(b)
            }
            LayerTag::San => san(&mut rng),
        };
        layers.push(layer);
    }
    let output = Linear::new(cfg.top_dim(), cfg.output_labels, &mut rng);
    let model = Model {
        config: cfg.clone(),
        input_projection,
        layers,
        output,
        frontend: Frontend::default(),
    };
    debug_assert_eq!(model.num_params(), param_count(cfg));
    Ok(model)
}

impl Model {
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        build(cfg, seed)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tags(&self) -> Vec<LayerTag> {
        self.layers.iter().map(ModelLayer::tag).collect()
    }

    pub fn tag_string(&self) -> String {
        self.tags().iter().map(LayerTag::to_string).collect()
    }

    pub fn memory_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                ModelLayer::San(s) => s.memory_params(),
                ModelLayer::Dfsmn(_) => 0,
            })
            .sum()
    }

    /// Same structure with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for m in z.params_mut() {
            m.data_mut().fill(0.0);
        }
        z
    }

    /// `self += alpha · other`, parameter by parameter.
    pub fn add_scaled(&mut self, alpha: f64, other: &Model) -> Result<()> {
        let src = other.params();
        let dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(Error::shape("Model::add_scaled", dst.len(), src.len()));
        }
        for (d, (_, s)) in dst.into_iter().zip(src) {
            s.ensure_shape("Model::add_scaled", d.rows(), d.cols())?;
            d.data_mut().iter_mut().zip(s.data()).for_each(|(a, b)| *a += alpha * b);
        }
        Ok(())
    }

    fn positional(&self, h: &Matrix) -> Result<Matrix> {
        PositionalEncoding::new(h.rows(), h.cols()).encode(h)
    }

    /// Forward over one (possibly padded) sequence whose first `len` rows are
    /// real. Dropout is active only when `rng` is given.
    pub fn forward_cached(&self, x: &Matrix, len: usize, mut rng: Option<&mut dyn RngCore>) -> Result<(Matrix, ModelCache)> {
        x.ensure_cols("Model::forward", self.config.input_dim)?;
        let mut h = x.clone();
        let input_projection = match &self.input_projection {
            Some(p) => {
                let (out, cache) = p.forward_cached(&h, len, None)?;
                h = self.positional(&out)?;
                Some(cache)
            }
            None => None,
        };
        let pe_before_san = self.config.kind == ModelKind::DfsmnSan && self.config.pe_before_san;
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = match layer {
                ModelLayer::Dfsmn(b) => {
                    let (out, c) = b.forward_cached(&h, len, None)?;
                    (out, LayerCache::Dfsmn(c))
                }
                ModelLayer::San(s) => {
                    if pe_before_san {
                        h = self.positional(&h)?;
                    }
                    let (out, c) = s.forward_cached(&h, len, reborrow(&mut rng))?;
                    (out, LayerCache::San(c))
                }
            };
            h = out;
            caches.push(cache);
        }
        let (logits, output) = self.output.forward_cached(&h, len, None)?;
        Ok((
            logits,
            ModelCache {
                input_projection,
                layers: caches,
                output,
            },
        ))
    }

    /// Returns the input gradient and a gradient-shaped copy of the model.
    /// Positional encodings are additive constants, so they pass gradients
    /// through unchanged.
    pub fn backward(&self, cache: &ModelCache, grad_logits: &Matrix) -> Result<(Matrix, Model)> {
        let (mut g, output) = self.output.backward(&cache.output, grad_logits)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let (dx, grad) = match (layer, c) {
                (ModelLayer::Dfsmn(b), LayerCache::Dfsmn(c)) => {
                    let (dx, gb) = b.backward(c, &g)?;
                    (dx, ModelLayer::Dfsmn(gb))
                }
                (ModelLayer::San(s), LayerCache::San(c)) => {
                    let (dx, gs) = s.backward(c, &g)?;
                    (dx, ModelLayer::San(gs))
                }
                _ => unreachable!("cache built by forward_cached of this model"),
            };
            g = dx;
            layers.push(grad);
        }
        layers.reverse();
        let input_projection = match (&self.input_projection, &cache.input_projection) {
            (Some(p), Some(c)) => {
                let (dx, gp) = p.backward(c, &g)?;
                g = dx;
                Some(gp)
            }
            _ => None,
        };
        Ok((
            g,
            Model {
                config: self.config.clone(),
                input_projection,
                layers,
                output,
                frontend: self.frontend.clone(),
            },
        ))
    }

    /// Deterministic forward over one unpadded sequence.
    pub fn forward_sequence(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_cached(x, x.rows(), None).map(|(out, _)| out)
    }

    /// Batched deterministic forward: sequences are zero-padded to the longest
    /// one, run with their true lengths, and trimmed back.
    pub fn forward(&self, batch: &SequenceBatch) -> Result<Vec<Matrix>> {
        if let Some(dim) = batch.feat_dim() {
            if dim != self.config.input_dim {
                return Err(Error::shape("Model::forward", format!("feat_dim {}", self.config.input_dim), format!("feat_dim {dim}")));
            }
        }
        let t_max = batch.lengths().into_iter().max().unwrap_or(0);
        batch
            .features()
            .par_iter()
            .map(|x| {
                let padded = x.resized_rows(t_max);
                let (out, _) = self.forward_cached(&padded, x.rows(), None)?;
                Ok(out.row_block(0..x.rows()))
            })
            .collect()
    }

    /// CTC loss of one sequence and the gradient of that loss.
    pub fn loss_and_gradients(&self, x: &Matrix, target: &CtcTarget, rng: Option<&mut dyn RngCore>) -> Result<(f64, Model)> {
        let (logits, cache) = self.forward_cached(x, x.rows(), rng)?;
        let result = ctc_loss(&log_softmax_rows(&logits), target)?;
        let (_, grads) = self.backward(&cache, &result.grad_logits)?;
        Ok((result.loss, grads))
    }
}

impl Parameters for Model {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        if let Some(p) = &self.input_projection {
            out.extend(p.params().into_iter().map(|(n, m)| (format!("input_projection.{n}"), m)));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let kind = match layer.tag() {
                LayerTag::Dfsmn => "dfsmn",
                LayerTag::San => "san",
            };
            out.extend(layer.params().into_iter().map(|(n, m)| (format!("layers.{i}.{kind}.{n}"), m)));
        }
        out.extend(self.output.params().into_iter().map(|(n, m)| (format!("output.{n}"), m)));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        if let Some(p) = &mut self.input_projection {
            out.extend(p.params_mut());
        }
        for layer in &mut self.layers {
            out.extend(layer.params_mut());
        }
        out.extend(self.output.params_mut());
        out
    }
}
