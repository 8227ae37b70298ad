//! Flat `key = value` run configuration with `#` comments and dotted
//! sections: `model.*`, `train.*`, `corpus.*`, `frontend.*`, `data.*`,
//! `gradcheck.*`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datapipe::SyntheticTaskSpec;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::numerics::DEFAULT_FD_EPS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Momentum(f64),
}

/// Feature/label files used instead of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFiles {
    pub train_features: PathBuf,
    pub train_labels: PathBuf,
    pub test_features: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSettings {
    pub eps: f64,
    pub seed: u64,
    /// Memory sizes exercised for both memory variants.
    pub memory_sizes: Vec<usize>,
    /// Name of a check whose analytic gradient is deliberately corrupted
    /// (negative control for the harness).
    pub corrupt: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_low: f64,
    pub clip_high: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub deterministic: bool,
    /// Evaluate CER every this many epochs (and always after the last).
    pub eval_every: usize,
    pub corpus: SyntheticTaskSpec,
    pub data: Option<DataFiles>,
    pub frontend_stack: usize,
    pub frontend_stride: usize,
    pub cmvn: bool,
    pub gradcheck: GradcheckSettings,
    explicit: BTreeSet<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::toy(),
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 8,
            clip_low: -1.0,
            clip_high: 1.0,
            seed: 0,
            optimizer: Optimizer::Sgd,
            deterministic: false,
            eval_every: 1,
            corpus: SyntheticTaskSpec::default(),
            data: None,
            frontend_stack: 1,
            frontend_stride: 1,
            cmvn: true,
            gradcheck: GradcheckSettings {
                eps: DEFAULT_FD_EPS,
                seed: 0,
                memory_sizes: vec![1, 4],
                corrupt: None,
            },
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

impl TrainConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Relative data paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut data: [Option<PathBuf>; 4] = Default::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), format!("expected `key = value`, found `{line}`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let slot = match key {
                "data.train_features" => Some(0),
                "data.train_labels" => Some(1),
                "data.test_features" => Some(2),
                "data.test_labels" => Some(3),
                _ => None,
            };
            match slot {
                Some(i) => data[i] = Some(base_dir.join(value)),
                None => cfg.set(key, value)?,
            }
            cfg.explicit.insert(key.to_string());
        }
        cfg.data = match data {
            [None, None, None, None] => None,
            [Some(tf), Some(tl), test_f, test_l] => {
                if test_f.is_some() != test_l.is_some() {
                    return Err(Error::config("data.test_labels", "test features and labels must be given together"));
                }
                Some(DataFiles {
                    train_features: tf,
                    train_labels: tl,
                    test_features: test_f,
                    test_labels: test_l,
                })
            }
            [_, None, ..] => return Err(Error::config("data.train_labels", "missing")),
            [None, ..] => return Err(Error::config("data.train_features", "missing")),
        };
        cfg.reconcile()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(k) = key.strip_prefix("model.") {
            return self.model.set(k, value);
        }
        let c = &mut self.corpus;
        match key {
            "train.learning_rate" => self.learning_rate = parse(key, value)?,
            "train.epochs" => self.epochs = parse(key, value)?,
            "train.batch_size" => self.batch_size = parse(key, value)?,
            "train.clip_low" => self.clip_low = parse(key, value)?,
            "train.clip_high" => self.clip_high = parse(key, value)?,
            "train.seed" => self.seed = parse(key, value)?,
            "train.deterministic" => self.deterministic = parse(key, value)?,
            "train.eval_every" => self.eval_every = parse(key, value)?,
            "train.optimizer" => {
                self.optimizer = match value {
                    "sgd" => Optimizer::Sgd,
                    "momentum" => Optimizer::Momentum(match self.optimizer {
                        Optimizer::Momentum(m) => m,
                        Optimizer::Sgd => 0.9,
                    }),
                    other => return Err(Error::config(key, format!("unknown optimizer `{other}` (sgd|momentum)"))),
                }
            }
            "train.momentum" => self.optimizer = Optimizer::Momentum(parse(key, value)?),
            "corpus.alphabet_size" => c.alphabet_size = parse(key, value)?,
            "corpus.feat_dim" => c.feat_dim = parse(key, value)?,
            "corpus.min_len" => c.min_len = parse(key, value)?,
            "corpus.max_len" => c.max_len = parse(key, value)?,
            "corpus.frames_per_label" => c.frames_per_label = parse(key, value)?,
            "corpus.noise_std" => c.noise_std = parse(key, value)?,
            "corpus.global_bias" => c.global_bias = parse(key, value)?,
            "corpus.bias_scale" => c.bias_scale = parse(key, value)?,
            "corpus.train_sequences" => c.train_sequences = parse(key, value)?,
            "corpus.test_sequences" => c.test_sequences = parse(key, value)?,
            "corpus.seed" => c.seed = parse(key, value)?,
            "frontend.stack" => self.frontend_stack = parse(key, value)?,
            "frontend.stride" => self.frontend_stride = parse(key, value)?,
            "frontend.cmvn" => self.cmvn = parse(key, value)?,
            "gradcheck.eps" => self.gradcheck.eps = parse(key, value)?,
            "gradcheck.seed" => self.gradcheck.seed = parse(key, value)?,
            "gradcheck.memory_sizes" => {
                self.gradcheck.memory_sizes = value
                    .split(',')
                    .map(|v| parse::<usize>(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "gradcheck.corrupt" => {
                self.gradcheck.corrupt = match value {
                    "" | "none" => None,
                    name => Some(name.to_string()),
                }
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Fills model dimensions implied by the data unless set explicitly, and
    /// checks cross-field invariants.
    fn reconcile(&mut self) -> Result<()> {
        if self.data.is_none() {
            let implied_input = self.frontend_stack * self.corpus.feat_dim;
            self.derive("model.input_dim", implied_input, |m| &mut m.input_dim)?;
            let labels = self.corpus.alphabet_size;
            self.derive("model.output_labels", labels, |m| &mut m.output_labels)?;
        }
        self.validate()
    }

    fn derive(&mut self, key: &str, implied: usize, field: fn(&mut ModelConfig) -> &mut usize) -> Result<()> {
        let slot = field(&mut self.model);
        if !self.explicit.contains(key) {
            *slot = implied;
        } else if *slot != implied {
            return Err(Error::config(key, format!("{} conflicts with the corpus, which implies {implied}", *slot)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.clip_low < self.clip_high) {
            return Err(Error::config("train.clip_low", format!("{} is not below clip_high {}", self.clip_low, self.clip_high)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("train.eval_every", "must be positive"));
        }
        if let Optimizer::Momentum(m) = self.optimizer {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::config("train.momentum", format!("{m} is outside [0, 1)")));
            }
        }
        if self.frontend_stack == 0 || self.frontend_stride == 0 {
            return Err(Error::config("frontend.stack", "stack and stride must be at least 1"));
        }
        if !(1e-7..=1e-3).contains(&self.gradcheck.eps) {
            return Err(Error::config("gradcheck.eps", "must lie in [1e-7, 1e-3]"));
        }
        if self.data.is_none() {
            self.corpus.validate().map_err(|e| Error::config("corpus", e.to_string()))?;
        }
        Ok(())
    }
}
