use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Optimizer, TrainConfig};
use crate::binio;
use crate::ctc::{edit_distance, greedy_decode, CtcTarget};
use crate::datapipe::{compute_cmvn, generate_corpus, read_features, read_labels, Frontend, SequenceBatch};
use crate::error::{Error, Result};
use crate::layers::Parameters;
use crate::model::Model;
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sequence CTC loss over the epoch's updates.
    pub loss: f64,
    /// Greedy-decoding CER on the evaluation set; NaN for epochs not evaluated.
    pub cer: f64,
    /// Wall time of the epoch; always 0 in deterministic mode.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<EpochRecord>,
}

impl RunLog {
    /// One `epoch loss cer seconds` line per epoch.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(out, "{} {} {} {}", r.epoch, r.loss, r.cer, r.seconds).expect("write to String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let f: Vec<&str> = line.split_whitespace().collect();
                let bad = || Error::InvalidArgument(format!("run log line {}: `{line}`", i + 1));
                if f.len() != 4 {
                    return Err(bad());
                }
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| bad())?,
                    loss: f[1].parse().map_err(|_| bad())?,
                    cer: f[2].parse().map_err(|_| bad())?,
                    seconds: f[3].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, self.to_text().as_bytes())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Training and evaluation sets after the front end, plus the front end
/// itself (with statistics fitted on the training set).
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: SequenceBatch,
    pub test: SequenceBatch,
    pub frontend: Frontend,
}

fn load_pair(features: &Path, labels: &Path, alphabet: usize) -> Result<SequenceBatch> {
    let feats = read_features(features)?;
    let targets = read_labels(labels, alphabet)?;
    if feats.len() != targets.len() {
        return Err(Error::format(labels, "line count", format!("{} label lines for {} feature records", targets.len(), feats.len())));
    }
    SequenceBatch::new(feats, targets)
}

pub fn prepare_data(cfg: &TrainConfig) -> Result<PreparedData> {
    let (train, test) = match &cfg.data {
        Some(files) => {
            let alphabet = cfg.model.output_labels;
            let train = load_pair(&files.train_features, &files.train_labels, alphabet)?;
            let test = match (&files.test_features, &files.test_labels) {
                (Some(f), Some(l)) => load_pair(f, l, alphabet)?,
                _ => SequenceBatch::new(vec![], vec![])?,
            };
            (train, test)
        }
        None => {
            let corpus = generate_corpus(&cfg.corpus)?;
            (corpus.train, corpus.test)
        }
    };
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut frontend = Frontend {
        stack: cfg.frontend_stack,
        stride: cfg.frontend_stride,
        cmvn: None,
    };
    let stacked = train.map_features(|x| frontend.stack(x))?;
    if cfg.cmvn {
        frontend.cmvn = Some(compute_cmvn(stacked.features())?);
    }
    let train = train.map_features(|x| frontend.apply(x))?;
    let test = test.map_features(|x| frontend.apply(x))?;
    if let Some(dim) = train.feat_dim() {
        if dim != cfg.model.input_dim {
            return Err(Error::shape("prepare_data", format!("feat_dim {}", cfg.model.input_dim), format!("feat_dim {dim}")));
        }
    }
    Ok(PreparedData { train, test, frontend })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub cer: f64,
    pub errors: usize,
    pub reference_labels: usize,
    pub sequences: usize,
}

/// Greedy-decodes per-frame scores and pools edit distances over the set:
/// CER = Σ distance / max(1, Σ reference length).
pub fn score_logits(logits: &[Matrix], targets: &[CtcTarget]) -> Result<EvalReport> {
    if logits.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    if logits.len() != targets.len() {
        return Err(Error::shape("score_logits", format!("{} targets", logits.len()), targets.len()));
    }
    let (mut errors, mut reference_labels) = (0, 0);
    for (l, t) in logits.iter().zip(targets) {
        errors += edit_distance(t.labels(), &greedy_decode(l)).distance;
        reference_labels += t.len();
    }
    Ok(EvalReport {
        cer: errors as f64 / reference_labels.max(1) as f64,
        errors,
        reference_labels,
        sequences: logits.len(),
    })
}

const EVAL_CHUNK: usize = 32;

pub fn evaluate(model: &Model, data: &SequenceBatch) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty evaluation set".into()));
    }
    let mut logits = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        logits.extend(model.forward(&data.select(chunk))?);
    }
    score_logits(&logits, data.targets())
}

/// Elementwise clamp of every gradient entry into `[low, high]`.
pub fn clip_gradients<P: Parameters>(grads: &mut P, low: f64, high: f64) {
    for m in grads.params_mut() {
        m.data_mut().iter_mut().for_each(|g| *g = g.clamp(low, high));
    }
}

struct OptimizerState {
    velocity: Option<Model>,
}

impl OptimizerState {
    fn new(kind: Optimizer, model: &Model) -> Self {
        Self {
            velocity: matches!(kind, Optimizer::Momentum(_)).then(|| model.zeros_like()),
        }
    }

    fn step(&mut self, kind: Optimizer, lr: f64, model: &mut Model, grads: &Model) -> Result<()> {
        match (kind, &mut self.velocity) {
            (Optimizer::Momentum(mu), Some(v)) => {
                for (vm, (_, gm)) in v.params_mut().into_iter().zip(grads.params()) {
                    vm.data_mut().iter_mut().zip(gm.data()).for_each(|(a, g)| *a = mu * *a + g);
                }
                model.add_scaled(-lr, v)
            }
            _ => model.add_scaled(-lr, grads),
        }
    }
}

const SHUFFLE_STREAM: u64 = 7;

fn dropout_seed(seed: u64, epoch: usize, sequence: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 32) ^ sequence as u64
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: RunLog,
}

/// Mini-batch training. Per-sequence gradients are computed in parallel and
/// reduced in sequence order, so results do not depend on thread scheduling.
pub fn train(cfg: &TrainConfig, data: &PreparedData) -> Result<TrainOutcome> {
    train_from(cfg, data, Model::build(&cfg.model, cfg.seed)?)
}

pub fn train_from(cfg: &TrainConfig, data: &PreparedData, mut model: Model) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.frontend = data.frontend.clone();
    let eval_set = if data.test.is_empty() { &data.train } else { &data.test };
    let use_dropout = !cfg.deterministic && cfg.model.dropout > 0.0;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(SHUFFLE_STREAM);
    let mut opt = OptimizerState::new(cfg.optimizer, &model);
    let mut log = RunLog::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, Model)> = chunk
                .par_iter()
                .map(|&i| {
                    let x = &data.train.features()[i];
                    let y = &data.train.targets()[i];
                    if use_dropout {
                        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed(cfg.seed, epoch, i));
                        model.loss_and_gradients(x, y, Some(&mut rng))
                    } else {
                        model.loss_and_gradients(x, y, None)
                    }
                })
                .collect::<Result<_>>()?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grads = model.zeros_like();
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                grads.add_scaled(scale, g)?;
            }
            if !batch_loss.is_finite() || grads.params().iter().any(|(_, m)| !m.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("batch loss {batch_loss} over sequences {chunk:?}"),
                });
            }
            loss_sum += batch_loss;
            clip_gradients(&mut grads, cfg.clip_low, cfg.clip_high);
            opt.step(cfg.optimizer, cfg.learning_rate, &mut model, &grads)?;
        }
        let cer = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            evaluate(&model, eval_set)?.cer
        } else {
            f64::NAN
        };
        let seconds = if cfg.deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / data.train.len() as f64,
            cer,
            seconds,
        };
        log::info!("epoch {epoch}: loss {:.5} cer {:.4} ({:.2}s)", record.loss, record.cer, record.seconds);
        log.records.push(record);
    }
    Ok(TrainOutcome { model, log })
}

pub const WEIGHTS_FILE: &str = "model.bin";
pub const RUNLOG_FILE: &str = "runlog.txt";

/// Trains from a config and writes `model.bin` and `runlog.txt` into `out_dir`.
pub fn cmd_train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let data = prepare_data(cfg)?;
    let outcome = train(cfg, &data)?;
    outcome.model.save(&out_dir.join(WEIGHTS_FILE))?;
    outcome.log.save(&out_dir.join(RUNLOG_FILE))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn small() -> TrainConfig {
        let text = "corpus.train_sequences = 6\ncorpus.test_sequences = 2\ncorpus.feat_dim = 4\n\
                    model.hidden_units = 8\nmodel.projection_dim = 8\nmodel.model_dim = 8\nmodel.heads = 2\n\
                    model.dfsmn_blocks_total = 2\nmodel.san_insert_every = 2\nmodel.d_ff = 8\n\
                    train.epochs = 2\ntrain.batch_size = 4\n";
        TrainConfig::parse(text, Path::new(".")).unwrap()
    }

    #[test]
    fn clipping_clamps_every_entry() {
        let mut m = Model::build(&small().model, 0).unwrap();
        for p in m.params_mut() {
            p.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = if i % 2 == 0 { 2.5 } else { -3.0 });
        }
        clip_gradients(&mut m, -1.0, 1.0);
        assert!(m.params().iter().all(|(_, p)| p.data().iter().all(|v| *v == 1.0 || *v == -1.0)));
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let mut cfg = small();
        cfg.learning_rate = 0.0;
        let data = prepare_data(&cfg).unwrap();
        let before = Model::build(&cfg.model, cfg.seed).unwrap();
        let after = train(&cfg, &data).unwrap().model;
        assert_eq!(before.params(), after.params());
    }

    #[test]
    fn run_log_text_round_trip() {
        let log = RunLog {
            records: vec![EpochRecord { epoch: 1, loss: 1.25, cer: 0.5, seconds: 0.0 }],
        };
        assert_eq!(log.to_text(), "1 1.25 0.5 0\n");
        assert_eq!(RunLog::parse(&log.to_text()).unwrap(), log);
    }

    #[test]
    fn oracle_logits_score_zero() {
        let targets = vec![CtcTarget::new(vec![1, 2], 3).unwrap(), CtcTarget::new(vec![2], 3).unwrap()];
        let onehot = |path: &[usize]| {
            let mut m = Matrix::zeros(path.len(), 3);
            path.iter().enumerate().for_each(|(t, &k)| m.set(t, k, 5.0));
            m
        };
        let logits = vec![onehot(&[1, 0, 2, 2]), onehot(&[0, 2, 0])];
        assert_eq!(score_logits(&logits, &targets).unwrap().cer, 0.0);
        assert!(score_logits(&[], &[]).is_err());
    }
}
