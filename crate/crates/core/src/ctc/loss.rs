use crate::error::{Error, Result};
use crate::numerics::{log_add, logsumexp, Matrix};

pub const BLANK: usize = 0;

/// Row normalisation tolerance for log-probability inputs.
const NORMALIZATION_TOL: f64 = 1e-9;

/// Label sequence over `[1, alphabet_size)`; index 0 is the blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtcTarget {
    labels: Vec<usize>,
    alphabet_size: usize,
}

impl CtcTarget {
    pub fn new(labels: Vec<usize>, alphabet_size: usize) -> Result<Self> {
        if let Some(&label) = labels.iter().find(|&&l| l == BLANK || l >= alphabet_size) {
            return Err(Error::CtcLabel {
                label,
                alphabet: alphabet_size,
            });
        }
        Ok(Self {
            labels,
            alphabet_size,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn adjacent_repeats(&self) -> usize {
        self.labels.windows(2).filter(|w| w[0] == w[1]).count()
    }

    /// Fewest frames any alignment needs.
    pub fn min_frames(&self) -> usize {
        self.len() + self.adjacent_repeats()
    }

    pub fn check_feasible(&self, frames: usize) -> Result<()> {
        if frames < self.min_frames() {
            return Err(Error::CtcInfeasible {
                labels: self.len(),
                repeats: self.adjacent_repeats(),
                frames,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CtcLossResult {
    /// Negative log-likelihood of the target.
    pub loss: f64,
    /// Gradient of `loss` with respect to the pre-softmax logits.
    pub grad_logits: Matrix,
}

pub(crate) fn validate_inputs(log_probs: &Matrix, target: &CtcTarget) -> Result<()> {
    log_probs.ensure_cols("ctc log_probs", target.alphabet_size())?;
    for r in 0..log_probs.rows() {
        let lse = logsumexp(log_probs.row(r));
        if !(lse.abs() <= NORMALIZATION_TOL) {
            return Err(Error::CtcNotNormalized { row: r, logsumexp: lse });
        }
    }
    target.check_feasible(log_probs.rows())
}

/// Blank-interleaved label sequence `[∅, l₁, ∅, l₂, …, ∅]`.
fn extended_labels(target: &CtcTarget) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &l in target.labels() {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

/// CTC negative log-likelihood and its gradient with respect to the logits
/// that produced `log_probs` via log-softmax. Forward–backward in log space.
pub fn ctc_loss(log_probs: &Matrix, target: &CtcTarget) -> Result<CtcLossResult> {
    validate_inputs(log_probs, target)?;
    let t_len = log_probs.rows();
    let ext = extended_labels(target);
    let s_len = ext.len();
    let neg = f64::NEG_INFINITY;
    let lp = |t: usize, s: usize| log_probs.get(t, ext[s]);
    let can_skip = |s: usize| s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2];

    let mut alpha = vec![neg; t_len * s_len];
    alpha[0] = lp(0, 0);
    if s_len > 1 {
        alpha[1] = lp(0, 1);
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if can_skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = if a == neg { neg } else { a + lp(t, s) };
        }
    }

    let mut beta = vec![neg; t_len * s_len];
    let last = (t_len - 1) * s_len;
    beta[last + s_len - 1] = lp(t_len - 1, s_len - 1);
    if s_len > 1 {
        beta[last + s_len - 2] = lp(t_len - 1, s_len - 2);
    }
    for t in (0..t_len - 1).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * s_len);
        let cur = &mut cur[t * s_len..];
        for s in 0..s_len {
            let mut b = next[s];
            if s + 1 < s_len {
                b = log_add(b, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                b = log_add(b, next[s + 2]);
            }
            cur[s] = if b == neg { neg } else { b + lp(t, s) };
        }
    }

    let mut log_likelihood = alpha[last + s_len - 1];
    if s_len > 1 {
        log_likelihood = log_add(log_likelihood, alpha[last + s_len - 2]);
    }
    if log_likelihood == neg {
        return Err(Error::CtcZeroProbability);
    }

    let alphabet = target.alphabet_size();
    let mut grad = Matrix::zeros(t_len, alphabet);
    let mut occupancy = vec![neg; alphabet];
    for t in 0..t_len {
        occupancy.iter_mut().for_each(|v| *v = neg);
        for s in 0..s_len {
            let a = alpha[t * s_len + s];
            let b = beta[t * s_len + s];
            if a == neg || b == neg {
                continue;
            }
            let k = ext[s];
            occupancy[k] = log_add(occupancy[k], a + b - lp(t, s));
        }
        let row = grad.row_mut(t);
        for k in 0..alphabet {
            let post = (occupancy[k] - log_likelihood).exp();
            row[k] = log_probs.get(t, k).exp() - post;
        }
    }
    Ok(CtcLossResult {
        loss: (-log_likelihood).max(0.0),
        grad_logits: grad,
    })
}

/// Collapses a frame-level path: merge repeats, then drop blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Path-enumeration limit for [`ctc_brute_force`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Loss by summing the probability of every one of the `A^T` frame paths that
/// collapses to the target. Only usable for tiny instances.
pub fn ctc_brute_force(log_probs: &Matrix, target: &CtcTarget) -> Result<f64> {
    validate_inputs(log_probs, target)?;
    let (t_len, a) = log_probs.shape();
    let paths = (a as f64).powi(t_len as i32);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            paths,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut path = vec![0usize; t_len];
    let mut total = 0.0;
    'outer: loop {
        if collapse(&path) == target.labels() {
            let logp: f64 = path.iter().enumerate().map(|(t, &k)| log_probs.get(t, k)).sum();
            total += logp.exp();
        }
        for slot in path.iter_mut().rev() {
            *slot += 1;
            if *slot < a {
                continue 'outer;
            }
            *slot = 0;
        }
        break;
    }
    if total <= 0.0 {
        return Err(Error::CtcZeroProbability);
    }
    Ok((-total.ln()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::log_softmax_rows;

    fn uniform(t: usize, a: usize) -> Matrix {
        Matrix::filled(t, a, -(a as f64).ln())
    }

    #[test]
    fn single_frame_single_label() {
        let target = CtcTarget::new(vec![1], 2).unwrap();
        let r = ctc_loss(&uniform(1, 2), &target).unwrap();
        assert!((r.loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_frames_three_valid_paths() {
        let target = CtcTarget::new(vec![1], 2).unwrap();
        let lp = uniform(2, 2);
        let r = ctc_loss(&lp, &target).unwrap();
        assert!((r.loss + 0.75f64.ln()).abs() < 1e-12);
        assert!((ctc_brute_force(&lp, &target).unwrap() - r.loss).abs() < 1e-12);
        let single = uniform(1, 2);
        assert!((ctc_brute_force(&single, &target).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_target_is_the_all_blank_path() {
        let logits = Matrix::from_rows(&[[0.3, -1.0, 2.0], [1.0, 0.0, 0.0], [-0.5, 0.2, 0.1]]);
        let lp = log_softmax_rows(&logits);
        let target = CtcTarget::new(vec![], 3).unwrap();
        let expected: f64 = -(0..3).map(|t| lp.get(t, BLANK)).sum::<f64>();
        let r = ctc_loss(&lp, &target).unwrap();
        assert!((r.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn infeasible_targets_are_errors() {
        let target = CtcTarget::new(vec![1, 1], 2).unwrap();
        assert!(matches!(
            ctc_loss(&uniform(2, 2), &target),
            Err(Error::CtcInfeasible { labels: 2, repeats: 1, frames: 2 })
        ));
        assert!(matches!(
            ctc_brute_force(&uniform(2, 2), &target),
            Err(Error::CtcInfeasible { .. })
        ));
        assert!(ctc_loss(&uniform(3, 2), &target).is_ok());
    }

    #[test]
    fn unnormalised_rows_and_bad_labels_are_rejected() {
        let target = CtcTarget::new(vec![1], 2).unwrap();
        assert!(matches!(
            ctc_loss(&Matrix::zeros(2, 2), &target),
            Err(Error::CtcNotNormalized { row: 0, .. })
        ));
        assert!(CtcTarget::new(vec![0], 3).is_err());
        assert!(CtcTarget::new(vec![3], 3).is_err());
    }

    #[test]
    fn zero_probability_alignment_is_an_error() {
        let lp = Matrix::from_rows(&[[0.0, f64::NEG_INFINITY]]);
        let target = CtcTarget::new(vec![1], 2).unwrap();
        assert!(matches!(ctc_loss(&lp, &target), Err(Error::CtcZeroProbability)));
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let target = CtcTarget::new(vec![1], 10).unwrap();
        assert!(matches!(
            ctc_brute_force(&uniform(8, 10), &target),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[1, 1, 0, 1]), vec![1, 1]);
        assert_eq!(collapse(&[0, 0, 0]), Vec::<usize>::new());
        assert_eq!(collapse(&[2, 0, 2, 2, 1]), vec![2, 2, 1]);
    }
}
