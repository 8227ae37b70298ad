//! Data pipeline: sequence batches, frame stacking, global CMVN, a synthetic
//! task generator and the on-disk feature/label formats.

mod batch;
mod cmvn;
mod files;
mod frontend;
mod synthetic;

pub use batch::SequenceBatch;
pub use cmvn::{apply_cmvn, compute_cmvn, CmvnStats, VARIANCE_FLOOR};
pub use files::{read_features, read_labels, write_features, write_labels, FEATURE_MAGIC};
pub use frontend::{stack_and_subsample, Frontend};
pub use synthetic::{generate_corpus, SyntheticCorpus, SyntheticTaskSpec};
