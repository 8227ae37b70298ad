use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::GradcheckSettings;
use crate::ctc::{ctc_loss, CtcTarget};
use crate::error::{Error, Result};
use crate::layers::{
    check_layer, AttentionLayer, DfsmnBlock, FeedForward, Layer, LayerNorm, Linear, MemoryKind, MultiHeadAttention,
    Parameters, PositionalEncoding,
};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::numerics::{finite_diff_gradient, grad_check, log_softmax_rows, Matrix};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub checked_values: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckTable {
    pub rows: Vec<CheckRow>,
    pub tolerance: f64,
}

impl GradcheckTable {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn row(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<28} {:>8} {:>14}  status\n", "check", "values", "max_rel_err");
        for r in &self.rows {
            writeln!(
                out,
                "{:<28} {:>8} {:>14.3e}  {}",
                r.name,
                r.checked_values,
                r.max_relative_error,
                if r.passed { "ok" } else { "FAIL" }
            )
            .expect("write to String");
        }
        out
    }
}

const T: usize = 6;
const LEN: usize = 5;
const D: usize = 4;
const HEADS: usize = 2;

/// Re-draws parameters so no gradient is trivially zero. Memory tensors use
/// their own stream so that base weights do not depend on the memory size.
fn randomize<P: Parameters>(layer: &mut P, seed: u64) {
    let names: Vec<bool> = layer.params().iter().map(|(n, _)| n.contains("mem_")).collect();
    let mut base = ChaCha8Rng::seed_from_u64(seed);
    let mut mem = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (m, is_mem) in layer.params_mut().into_iter().zip(names) {
        let r = if is_mem { &mut mem } else { &mut base };
        *m = Matrix::uniform(m.rows(), m.cols(), 0.8, r);
    }
}

fn fix_norm_gains(norm: &mut LayerNorm) {
    norm.gain = norm.gain.map(|g| 1.0 + 0.5 * g);
}

struct Harness<'a> {
    settings: &'a GradcheckSettings,
    rows: Vec<CheckRow>,
}

impl Harness<'_> {
    fn record(&mut self, name: &str, mut analytic: Vec<f64>, numeric: Vec<f64>) -> Result<()> {
        if self.settings.corrupt.as_deref() == Some(name) {
            // perturb the largest entry so the damage cannot hide under a ~0 value
            let worst = (0..analytic.len()).max_by(|&a, &b| analytic[a].abs().total_cmp(&analytic[b].abs()));
            if let Some(i) = worst {
                analytic[i] += 0.01 * (1.0 + analytic[i].abs());
            }
        }
        let report = grad_check(&analytic, &numeric)?;
        self.rows.push(CheckRow {
            name: name.to_string(),
            checked_values: analytic.len(),
            max_relative_error: report.max_relative_error,
            passed: report.passes(GRADCHECK_TOLERANCE),
        });
        Ok(())
    }

    fn layer<L: Layer>(&mut self, name: &str, layer: &L, in_cols: usize, out_cols: usize) -> Result<()> {
        let mut r = ChaCha8Rng::seed_from_u64(self.settings.seed ^ 0xda7a);
        let x = Matrix::uniform(T, in_cols, 1.0, &mut r);
        let up = Matrix::uniform(T, out_cols, 1.0, &mut r);
        let check = check_layer(layer, &x, LEN, &up, self.settings.eps)?;
        self.record(name, check.analytic, check.numeric)
    }
}

fn attention(kind: MemoryKind, n: usize, seed: u64) -> MultiHeadAttention {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ChaCha8Rng::seed_from_u64(seed + 1);
    let mut a = MultiHeadAttention::new(D, HEADS, kind, n, &mut r, &mut m);
    randomize(&mut a, seed);
    a
}

/// Finite-difference checks of every layer type, both memory variants, the
/// CTC loss and a small end-to-end model. Dropout is never active.
pub fn run_gradchecks(settings: &GradcheckSettings) -> Result<GradcheckTable> {
    let seed = settings.seed;
    let mut h = Harness { settings, rows: Vec::new() };
    let mut r = ChaCha8Rng::seed_from_u64(seed);

    let mut block = DfsmnBlock::new(3, 6, D, 2, 2, &mut r);
    randomize(&mut block, seed + 10);
    h.layer("dfsmn_block", &block, 3, D)?;
    let mut skip = DfsmnBlock::new(D, 6, D, 3, 1, &mut r);
    randomize(&mut skip, seed + 11);
    h.layer("dfsmn_block_skip", &skip, D, D)?;

    h.layer("attention", &attention(MemoryKind::None, 0, seed + 20), D, D)?;
    for &n in &settings.memory_sizes {
        h.layer(&format!("attention_kv_n{n}"), &attention(MemoryKind::KeyValue, n, seed + 20), D, D)?;
        h.layer(&format!("attention_ie_n{n}"), &attention(MemoryKind::InputEmbedding, n, seed + 20), D, D)?;
    }

    let mut san = AttentionLayer::new(D, HEADS, Some(8), MemoryKind::KeyValue, 2, 0.0, &mut r, &mut ChaCha8Rng::seed_from_u64(seed + 30));
    randomize(&mut san, seed + 31);
    fix_norm_gains(&mut san.attn_norm);
    if let Some(f) = san.ffn.as_mut() {
        fix_norm_gains(&mut f.norm);
    }
    h.layer("san_layer", &san, D, D)?;

    let mut norm = LayerNorm::new(D);
    randomize(&mut norm, seed + 40);
    fix_norm_gains(&mut norm);
    h.layer("layer_norm", &norm, D, D)?;

    let mut ffn = FeedForward::new(D, 8, &mut r);
    randomize(&mut ffn, seed + 50);
    h.layer("ffn", &ffn, D, D)?;

    let mut lin = Linear::new(D, 3, &mut r);
    randomize(&mut lin, seed + 60);
    h.layer("linear", &lin, D, 3)?;

    // positional encoding: an additive constant, so the input gradient is the upstream
    let pe = PositionalEncoding::new(T, D);
    let x = Matrix::uniform(T, D, 1.0, &mut r);
    let up = Matrix::uniform(T, D, 1.0, &mut r);
    let numeric = finite_diff_gradient(
        |t| {
            let xi = Matrix::from_vec(T, D, t.to_vec())?;
            Ok(pe.encode(&xi)?.data().iter().zip(up.data()).map(|(a, b)| a * b).sum())
        },
        x.data(),
        settings.eps,
    )?;
    h.record("positional_encoding", up.data().to_vec(), numeric)?;

    let target = CtcTarget::new(vec![1, 2, 1], 3)?;
    let logits = Matrix::uniform(T, 3, 2.0, &mut r);
    let analytic = ctc_loss(&log_softmax_rows(&logits), &target)?.grad_logits.into_vec();
    let numeric = finite_diff_gradient(
        |t| Ok(ctc_loss(&log_softmax_rows(&Matrix::from_vec(T, 3, t.to_vec())?), &target)?.loss),
        logits.data(),
        settings.eps,
    )?;
    h.record("ctc_loss", analytic, numeric)?;

    let cfg = ModelConfig {
        kind: ModelKind::DfsmnSan,
        input_dim: 3,
        model_dim: D,
        heads: HEADS,
        dfsmn_blocks_total: 2,
        san_insert_every: 1,
        lookback_order: 2,
        lookahead_order: 1,
        hidden_units: 5,
        projection_dim: D,
        memory_variant: MemoryKind::InputEmbedding,
        memory_n: 2,
        output_labels: 3,
        d_ff: 6,
        dropout: 0.0,
        ..ModelConfig::toy()
    };
    let mut model = Model::build(&cfg, seed)?;
    let mut jr = ChaCha8Rng::seed_from_u64(seed + 70);
    for m in model.params_mut() {
        m.data_mut().iter_mut().for_each(|v| *v += jr.random_range(-0.3..0.3));
    }
    let x = Matrix::uniform(T, 3, 1.0, &mut r);
    let (_, grads) = model.loss_and_gradients(&x, &target, None)?;
    let numeric = finite_diff_gradient(
        |t| {
            let mut m = model.clone();
            m.assign_flat(t)?;
            Ok(m.loss_and_gradients(&x, &target, None)?.0)
        },
        &model.flatten(),
        settings.eps,
    )?;
    h.record("model_ctc", grads.flatten(), numeric)?;

    if let Some(name) = &settings.corrupt {
        if !h.rows.iter().any(|row| &row.name == name) {
            return Err(Error::config("gradcheck.corrupt", format!("no check named `{name}`")));
        }
    }
    Ok(GradcheckTable {
        rows: h.rows,
        tolerance: GRADCHECK_TOLERANCE,
    })
}
