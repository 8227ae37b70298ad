use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Precomputed sinusoidal table: `PE(t)[2m] = sin(t / 10000^{2m/d})`,
/// `PE(t)[2m+1] = cos(t / 10000^{2m/d})`, positions 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    table: Matrix,
}

impl PositionalEncoding {
    pub fn new(max_len: usize, dim: usize) -> Self {
        let mut table = Matrix::zeros(max_len, dim);
        for t in 0..max_len {
            let row = table.row_mut(t);
            for (c, v) in row.iter_mut().enumerate() {
                let pair = (c / 2) * 2;
                let angle = t as f64 / 10000f64.powf(pair as f64 / dim as f64);
                *v = if c % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
        Self { table }
    }

    pub fn max_len(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    /// `x + PE` for the first `x.rows()` positions. Gradient is the identity.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() > self.max_len() {
            return Err(Error::InvalidArgument(format!(
                "sequence of {} frames exceeds positional table length {}",
                x.rows(),
                self.max_len()
            )));
        }
        x.ensure_cols("positional_encode", self.dim())?;
        x.add(&self.table.row_block(0..x.rows()))
    }
}

pub fn positional_encode(x: &Matrix, pe: &PositionalEncoding) -> Result<Matrix> {
    pe.encode(x)
}
