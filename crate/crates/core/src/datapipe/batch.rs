use crate::ctc::CtcTarget;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Variable-length feature sequences with their label targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    features: Vec<Matrix>,
    targets: Vec<CtcTarget>,
}

impl SequenceBatch {
    /// `targets` may be empty (unlabelled data); otherwise one per sequence.
    pub fn new(features: Vec<Matrix>, targets: Vec<CtcTarget>) -> Result<Self> {
        if !targets.is_empty() && targets.len() != features.len() {
            return Err(Error::shape(
                "SequenceBatch::new",
                format!("{} targets", features.len()),
                format!("{} targets", targets.len()),
            ));
        }
        if let Some(first) = features.first() {
            let dim = first.cols();
            if let Some(bad) = features.iter().find(|m| m.cols() != dim) {
                return Err(Error::shape("SequenceBatch::new", format!("feat_dim {dim}"), format!("feat_dim {}", bad.cols())));
            }
        }
        if features.iter().any(|m| m.rows() == 0) {
            return Err(Error::InvalidArgument("sequence with zero frames".into()));
        }
        Ok(Self { features, targets })
    }

    pub fn features(&self) -> &[Matrix] {
        &self.features
    }

    pub fn targets(&self) -> &[CtcTarget] {
        &self.targets
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.features.iter().map(Matrix::rows).collect()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feat_dim(&self) -> Option<usize> {
        self.features.first().map(Matrix::cols)
    }

    pub fn is_labelled(&self) -> bool {
        !self.targets.is_empty() || self.features.is_empty()
    }

    /// Sub-batch of the given sequence indices.
    pub fn select(&self, indices: &[usize]) -> SequenceBatch {
        SequenceBatch {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            targets: if self.targets.is_empty() {
                vec![]
            } else {
                indices.iter().map(|&i| self.targets[i].clone()).collect()
            },
        }
    }

    pub fn map_features<F>(&self, f: F) -> Result<SequenceBatch>
    where
        F: Fn(&Matrix) -> Result<Matrix>,
    {
        let features = self.features.iter().map(f).collect::<Result<Vec<_>>>()?;
        SequenceBatch::new(features, self.targets.clone())
    }
}
