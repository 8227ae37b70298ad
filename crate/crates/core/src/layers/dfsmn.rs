use rand::{Rng, RngCore};

use super::{check_len, Layer, Parameters};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One DFSMN component: `ReLU(x·W_in + b)·W_proj`, followed by a per-channel
/// FIR memory over `lookback_order` past frames (plus the current one) and
/// `lookahead_order` future frames. An identity skip from the block input is
/// added whenever the input and projection widths agree.
#[derive(Debug, Clone, PartialEq)]
pub struct DfsmnBlock {
    pub input_weight: Matrix,
    pub input_bias: Matrix,
    pub projection_weight: Matrix,
    /// Row `i` holds the coefficients applied to frame `t − i`, `i = 0..=N1`.
    pub fir_back: Matrix,
    /// Row `j − 1` holds the coefficients applied to frame `t + j`, `j = 1..=N2`.
    pub fir_ahead: Matrix,
}

#[derive(Debug, Clone)]
pub struct DfsmnCache {
    x: Matrix,
    pre: Matrix,
    act: Matrix,
    h: Matrix,
    len: usize,
}

impl DfsmnBlock {
    /// Glorot-initialised transforms; `a₀ = 1` and every other FIR coefficient zero.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_units: usize,
        projection_dim: usize,
        lookback_order: usize,
        lookahead_order: usize,
        rng: &mut R,
    ) -> Self {
        let mut fir_back = Matrix::zeros(lookback_order + 1, projection_dim);
        fir_back.row_mut(0).fill(1.0);
        Self {
            input_weight: Matrix::xavier(input_dim, hidden_units, rng),
            input_bias: Matrix::zeros(1, hidden_units),
            projection_weight: Matrix::xavier(hidden_units, projection_dim, rng),
            fir_back,
            fir_ahead: Matrix::zeros(lookahead_order, projection_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_weight.rows()
    }

    pub fn hidden_units(&self) -> usize {
        self.input_weight.cols()
    }

    pub fn projection_dim(&self) -> usize {
        self.projection_weight.cols()
    }

    pub fn lookback_order(&self) -> usize {
        self.fir_back.rows().saturating_sub(1)
    }

    pub fn lookahead_order(&self) -> usize {
        self.fir_ahead.rows()
    }

    pub fn has_skip(&self) -> bool {
        self.input_dim() == self.projection_dim()
    }

    fn validate(&self) -> Result<()> {
        let (hidden, proj) = (self.hidden_units(), self.projection_dim());
        self.input_bias.ensure_shape("DfsmnBlock.input_bias", 1, hidden)?;
        self.projection_weight
            .ensure_shape("DfsmnBlock.projection_weight", hidden, proj)?;
        if self.fir_back.rows() == 0 {
            return Err(Error::shape("DfsmnBlock.fir_back", "at least one row (a_0)", 0));
        }
        self.fir_back.ensure_cols("DfsmnBlock.fir_back", proj)?;
        self.fir_ahead.ensure_cols("DfsmnBlock.fir_ahead", proj)
    }

    fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            input_weight: z(&self.input_weight),
            input_bias: z(&self.input_bias),
            projection_weight: z(&self.projection_weight),
            fir_back: z(&self.fir_back),
            fir_ahead: z(&self.fir_ahead),
        }
    }
}

fn check_fir_shapes(h: &Matrix, back: &Matrix, ahead: &Matrix) -> Result<()> {
    if back.rows() == 0 {
        return Err(Error::shape("dfsmn_memory", "at least one look-back row", 0));
    }
    back.ensure_cols("dfsmn_memory look-back coefficients", h.cols())?;
    ahead.ensure_cols("dfsmn_memory look-ahead coefficients", h.cols())
}

/// `out_t = Σ_{i=0..N1} a_i ⊙ h_{t−i} + Σ_{j=1..N2} b_j ⊙ h_{t+j}`, frames outside
/// `[0, len)` read as zero and output rows from `len` on are zero.
fn fir_forward(h: &Matrix, back: &Matrix, ahead: &Matrix, len: usize) -> Matrix {
    let d = h.cols();
    let mut out = Matrix::zeros(h.rows(), d);
    for t in 0..len {
        let o = out.row_mut(t);
        for i in 0..back.rows().min(t + 1) {
            for ((o, &a), &v) in o.iter_mut().zip(back.row(i)).zip(h.row(t - i)) {
                *o += a * v;
            }
        }
        for j in 1..=ahead.rows() {
            if t + j >= len {
                break;
            }
            for ((o, &b), &v) in o.iter_mut().zip(ahead.row(j - 1)).zip(h.row(t + j)) {
                *o += b * v;
            }
        }
    }
    out
}

/// Returns `(dh, d_back, d_ahead)`.
fn fir_backward(
    grad: &Matrix,
    h: &Matrix,
    back: &Matrix,
    ahead: &Matrix,
    len: usize,
) -> (Matrix, Matrix, Matrix) {
    let d = h.cols();
    let mut dh = Matrix::zeros(h.rows(), d);
    let mut d_back = Matrix::zeros(back.rows(), d);
    let mut d_ahead = Matrix::zeros(ahead.rows(), d);
    for t in 0..len {
        let g = grad.row(t);
        for i in 0..back.rows().min(t + 1) {
            let src = t - i;
            for c in 0..d {
                d_back.data_mut()[i * d + c] += g[c] * h.get(src, c);
                dh.data_mut()[src * d + c] += g[c] * back.get(i, c);
            }
        }
        for j in 1..=ahead.rows() {
            let src = t + j;
            if src >= len {
                break;
            }
            for c in 0..d {
                d_ahead.data_mut()[(j - 1) * d + c] += g[c] * h.get(src, c);
                dh.data_mut()[src * d + c] += g[c] * ahead.get(j - 1, c);
            }
        }
    }
    (dh, d_back, d_ahead)
}

/// FIR memory of a block applied to a `T × d_proj` sequence with zero padding at both ends.
pub fn dfsmn_memory(h_seq: &Matrix, block: &DfsmnBlock) -> Result<Matrix> {
    check_fir_shapes(h_seq, &block.fir_back, &block.fir_ahead)?;
    Ok(fir_forward(h_seq, &block.fir_back, &block.fir_ahead, h_seq.rows()))
}

/// Full block forward on an unpadded sequence.
pub fn dfsmn_block_forward(x: &Matrix, block: &DfsmnBlock) -> Result<Matrix> {
    block.forward(x, x.rows())
}

impl Parameters for DfsmnBlock {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("input_weight".into(), &self.input_weight),
            ("input_bias".into(), &self.input_bias),
            ("projection_weight".into(), &self.projection_weight),
            ("fir_back".into(), &self.fir_back),
            ("fir_ahead".into(), &self.fir_ahead),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.input_weight,
            &mut self.input_bias,
            &mut self.projection_weight,
            &mut self.fir_back,
            &mut self.fir_ahead,
        ]
    }
}

impl Layer for DfsmnBlock {
    type Cache = DfsmnCache;

    fn forward_cached(
        &self,
        x: &Matrix,
        len: usize,
        _rng: Option<&mut dyn RngCore>,
    ) -> Result<(Matrix, DfsmnCache)> {
        self.validate()?;
        check_len("DfsmnBlock", x, len)?;
        x.ensure_cols("DfsmnBlock input", self.input_dim())?;
        let pre = x.matmul(&self.input_weight)?.add_row_broadcast(&self.input_bias)?;
        let act = pre.map(|v| v.max(0.0));
        let h = act.matmul(&self.projection_weight)?;
        let memory = fir_forward(&h, &self.fir_back, &self.fir_ahead, len);
        let mut out = h.add(&memory)?;
        if self.has_skip() {
            out.add_assign(x)?;
        }
        out.zero_rows_from(len);
        Ok((
            out,
            DfsmnCache {
                x: x.clone(),
                pre,
                act,
                h,
                len,
            },
        ))
    }

    fn backward(&self, cache: &DfsmnCache, grad_out: &Matrix) -> Result<(Matrix, Self)> {
        let len = cache.len;
        let mut g = grad_out.clone();
        g.ensure_shape("DfsmnBlock::backward", cache.h.rows(), self.projection_dim())?;
        g.zero_rows_from(len);

        let (mut dh, d_back, d_ahead) = fir_backward(&g, &cache.h, &self.fir_back, &self.fir_ahead, len);
        dh.add_assign(&g)?;

        let mut grads = self.zeros_like();
        grads.fir_back = d_back;
        grads.fir_ahead = d_ahead;
        grads.projection_weight = cache.act.t_matmul(&dh)?;
        let mut d_act = dh.matmul_t(&self.projection_weight)?;
        for (d, &p) in d_act.data_mut().iter_mut().zip(cache.pre.data()) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        grads.input_weight = cache.x.t_matmul(&d_act)?;
        grads.input_bias = d_act.column_sums();
        let mut dx = d_act.matmul_t(&self.input_weight)?;
        if self.has_skip() {
            dx.add_assign(&g)?;
        }
        Ok((dx, grads))
    }
}
