//! Dense matrices, numerically stable primitives and the finite-difference
//! gradient oracle that every backward pass is checked against.

mod gradcheck;
mod matrix;
mod ops;

pub use gradcheck::{finite_diff_gradient, grad_check, GradCheckReport, DEFAULT_FD_EPS};
pub use matrix::Matrix;
pub use ops::{layer_norm, log_add, log_softmax_rows, logsumexp, softmax_rows};

pub(crate) use matrix::dot;
pub(crate) use ops::{layer_norm_with_stats, softmax_masked_in_place, RowNormStats};
