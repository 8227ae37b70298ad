use super::loss::collapse;
use crate::numerics::Matrix;

/// Per-frame argmax (ties to the lowest index), then collapse.
pub fn greedy_decode(log_probs: &Matrix) -> Vec<usize> {
    let path: Vec<usize> = log_probs
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}
