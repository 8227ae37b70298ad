use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::SequenceBatch;
use crate::ctc::CtcTarget;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Recipe for a solvable toy recognition task: every label emits
/// `frames_per_label` noisy copies of its own template vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskSpec {
    /// Includes the blank, so labels are drawn from `[1, alphabet_size)`.
    pub alphabet_size: usize,
    pub feat_dim: usize,
    /// Sequence lengths in frames, inclusive.
    pub min_len: usize,
    pub max_len: usize,
    pub frames_per_label: usize,
    pub noise_std: f64,
    /// Adds one corpus-wide constant pattern to every frame.
    pub global_bias: bool,
    pub bias_scale: f64,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            alphabet_size: 5,
            feat_dim: 16,
            min_len: 10,
            max_len: 30,
            frames_per_label: 3,
            noise_std: 0.3,
            global_bias: false,
            bias_scale: 2.0,
            train_sequences: 200,
            test_sequences: 50,
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.alphabet_size < 2 {
            return bad(format!("alphabet_size {} leaves no non-blank label", self.alphabet_size));
        }
        if self.feat_dim == 0 || self.frames_per_label == 0 {
            return bad("feat_dim and frames_per_label must be positive".into());
        }
        if self.min_len > self.max_len {
            return bad(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len));
        }
        if self.min_len < self.frames_per_label {
            return bad(format!(
                "min_len {} is shorter than one label ({} frames)",
                self.min_len, self.frames_per_label
            ));
        }
        if self.alphabet_size < 3 && self.max_len >= 2 * self.frames_per_label {
            return bad("multi-label sequences need at least two non-blank labels".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !self.bias_scale.is_finite() {
            return bad("noise_std must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub train: SequenceBatch,
    pub test: SequenceBatch,
    /// Row `k` is the template of label `k`; row 0 (blank) is unused and zero.
    pub templates: Matrix,
    pub bias: Option<Vec<f64>>,
}

const TEMPLATE_STREAM: u64 = 0;
const BIAS_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

fn standard_normal(rows: usize, cols: usize, scale: f64, r: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, r))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

/// Deterministic in `spec`: the same spec always yields the same corpus, and
/// toggling `global_bias` leaves labels, templates and noise untouched.
pub fn generate_corpus(spec: &SyntheticTaskSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut templates = standard_normal(spec.alphabet_size, spec.feat_dim, 1.0, &mut stream(spec.seed, TEMPLATE_STREAM));
    templates.row_mut(0).fill(0.0);
    let bias = spec.global_bias.then(|| {
        standard_normal(1, spec.feat_dim, spec.bias_scale, &mut stream(spec.seed, BIAS_STREAM)).into_vec()
    });
    let make = |count: usize, id: u64| -> Result<SequenceBatch> {
        let mut r = stream(spec.seed, id);
        let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut features = Vec::with_capacity(count);
        let mut targets = Vec::with_capacity(count);
        for _ in 0..count {
            let (x, labels) = sample_sequence(spec, &templates, bias.as_deref(), &noise, &mut r);
            features.push(x);
            targets.push(CtcTarget::new(labels, spec.alphabet_size)?);
        }
        SequenceBatch::new(features, targets)
    };
    Ok(SyntheticCorpus {
        train: make(spec.train_sequences, TRAIN_STREAM)?,
        test: make(spec.test_sequences, TEST_STREAM)?,
        templates,
        bias,
    })
}

fn sample_sequence(
    spec: &SyntheticTaskSpec,
    templates: &Matrix,
    bias: Option<&[f64]>,
    noise: &Normal<f64>,
    r: &mut ChaCha8Rng,
) -> (Matrix, Vec<usize>) {
    let t = r.random_range(spec.min_len..=spec.max_len);
    let k = spec.frames_per_label;
    let n_labels = t / k;
    let mut labels = Vec::with_capacity(n_labels);
    for i in 0..n_labels {
        // no adjacent repeats: a doubled label would be an unbroken run
        let label = match i {
            0 => r.random_range(1..spec.alphabet_size),
            _ => {
                let prev = labels[i - 1];
                let l = r.random_range(1..spec.alphabet_size - 1);
                if l >= prev { l + 1 } else { l }
            }
        };
        labels.push(label);
    }
    let mut x = Matrix::zeros(t, spec.feat_dim);
    for f in 0..t {
        let label = labels[(f / k).min(n_labels - 1)];
        let row = x.row_mut(f);
        row.copy_from_slice(templates.row(label));
        if let Some(b) = bias {
            row.iter_mut().zip(b).for_each(|(v, b)| *v += b);
        }
        if spec.noise_std > 0.0 {
            row.iter_mut().for_each(|v| *v += noise.sample(r));
        }
    }
    (x, labels)
}
