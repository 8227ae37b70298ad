//! Connectionist temporal classification: loss and gradient, a brute-force
//! oracle, greedy decoding and edit-distance scoring.

mod decode;
mod loss;
mod score;

pub use decode::greedy_decode;
pub use loss::{
    collapse, ctc_brute_force, ctc_loss, CtcLossResult, CtcTarget, BLANK, BRUTE_FORCE_LIMIT,
};
pub use score::{cer, edit_distance, EditOps};
