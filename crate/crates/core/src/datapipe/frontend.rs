use super::{apply_cmvn, CmvnStats};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Input pipeline stored alongside a model: frame stacking/subsampling
/// followed by optional global normalisation of the stacked frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Frontend {
    pub stack: usize,
    pub stride: usize,
    pub cmvn: Option<CmvnStats>,
}

impl Default for Frontend {
    fn default() -> Self {
        Self {
            stack: 1,
            stride: 1,
            cmvn: None,
        }
    }
}

impl Frontend {
    pub fn output_dim(&self, raw_dim: usize) -> usize {
        self.stack * raw_dim
    }

    /// Stacks only; used to gather CMVN statistics.
    pub fn stack(&self, x: &Matrix) -> Result<Matrix> {
        stack_and_subsample(x, self.stack, self.stride)
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let stacked = self.stack(x)?;
        match &self.cmvn {
            Some(stats) => apply_cmvn(&stacked, stats),
            None => Ok(stacked),
        }
    }
}

/// Concatenates `stack` consecutive frames starting every `stride` frames.
/// Windows running past the end repeat the last frame.
pub fn stack_and_subsample(x: &Matrix, stack: usize, stride: usize) -> Result<Matrix> {
    if stack == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "stack ({stack}) and stride ({stride}) must be at least 1"
        )));
    }
    let (t, f) = x.shape();
    if t == 0 {
        return Err(Error::InvalidArgument("cannot stack an empty sequence".into()));
    }
    let out_len = t.div_ceil(stride);
    let mut out = Matrix::zeros(out_len, stack * f);
    for m in 0..out_len {
        let row = out.row_mut(m);
        for j in 0..stack {
            let src = (m * stride + j).min(t - 1);
            row[j * f..(j + 1) * f].copy_from_slice(x.row(src));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_stack_is_identity() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        assert_eq!(stack_and_subsample(&x, 1, 1).unwrap(), x);
    }

    #[test]
    fn pairs_without_padding() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0]]);
        let y = stack_and_subsample(&x, 2, 2).unwrap();
        assert_eq!(y, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
    }

    #[test]
    fn eight_by_three_shapes_and_edge_replication() {
        let x = Matrix::from_vec(9, 2, (0..18).map(f64::from).collect()).unwrap();
        let y = stack_and_subsample(&x, 8, 3).unwrap();
        assert_eq!(y.shape(), (3, 16));
        // last window starts at frame 6 and replicates frame 8 five times
        let last = y.row(2);
        assert_eq!(&last[..6], &[12.0, 13.0, 14.0, 15.0, 16.0, 17.0]);
        assert!(last[6..].chunks(2).all(|c| c == [16.0, 17.0]));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(stack_and_subsample(&Matrix::zeros(0, 2), 1, 1).is_err());
        assert!(stack_and_subsample(&Matrix::zeros(3, 2), 0, 1).is_err());
        assert!(stack_and_subsample(&Matrix::zeros(3, 2), 1, 0).is_err());
    }
}
