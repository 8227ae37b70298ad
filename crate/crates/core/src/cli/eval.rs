use std::path::{Path, PathBuf};

use super::train::{evaluate, EvalReport};
use crate::datapipe::{read_features, read_labels, SequenceBatch};
use crate::error::{Error, Result};
use crate::model::load_weights;

pub const FEATURES_EXT: &str = "feats";
pub const LABELS_EXT: &str = "labels";

/// `(name, features, labels)` for every set under `data`: either a single
/// `.feats` file with a sibling `.labels` file, or a directory of such pairs.
fn discover(data: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let feature_files: Vec<PathBuf> = if data.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(data)
            .map_err(|e| Error::io(data, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == FEATURES_EXT))
            .collect();
        v.sort();
        v
    } else {
        vec![data.to_path_buf()]
    };
    if feature_files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .{FEATURES_EXT} files under {}", data.display())));
    }
    Ok(feature_files
        .into_iter()
        .map(|f| {
            let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let labels = f.with_extension(LABELS_EXT);
            (name, f, labels)
        })
        .collect())
}

/// Greedy-decoding CER of a saved model on every set found under `data`.
pub fn cmd_eval(weights: &Path, data: &Path) -> Result<Vec<(String, EvalReport)>> {
    let model = load_weights(weights)?;
    let cfg = model.config().clone();
    discover(data)?
        .into_iter()
        .map(|(name, feats, labels)| {
            let features = read_features(&feats)?;
            let targets = read_labels(&labels, cfg.output_labels)?;
            if features.len() != targets.len() {
                return Err(Error::format(&labels, "line count", format!("{} lines for {} records", targets.len(), features.len())));
            }
            let batch = SequenceBatch::new(features, targets)?.map_features(|x| model.frontend.apply(x))?;
            if let Some(dim) = batch.feat_dim() {
                if dim != cfg.input_dim {
                    return Err(Error::shape("eval", format!("feat_dim {}", cfg.input_dim), format!("feat_dim {dim} in {name}")));
                }
            }
            Ok((name, evaluate(&model, &batch)?))
        })
        .collect()
}
