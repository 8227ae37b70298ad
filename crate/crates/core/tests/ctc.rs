use dfsmn_san::ctc::{
    cer, collapse, ctc_brute_force, ctc_loss, edit_distance, greedy_decode, CtcTarget, BLANK,
};
use dfsmn_san::numerics::{finite_diff_gradient, grad_check, log_softmax_rows, Matrix, DEFAULT_FD_EPS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All label sequences of length `len` over `[1, alphabet)`.
fn label_sequences(alphabet: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| (1..alphabet).map(move |l| [p.clone(), vec![l]].concat()))
            .collect();
    }
    out
}

#[test]
fn dynamic_program_matches_enumeration_on_small_grid() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for t in 1..=6 {
        for a in 2..=3 {
            for l in 0..=3 {
                for labels in label_sequences(a, l) {
                    let target = CtcTarget::new(labels, a).unwrap();
                    for _ in 0..50 {
                        let logits = Matrix::uniform(t, a, 3.0, &mut r);
                        let lp = log_softmax_rows(&logits);
                        match (ctc_loss(&lp, &target), ctc_brute_force(&lp, &target)) {
                            (Ok(dp), Ok(bf)) => {
                                worst = worst.max((dp.loss - bf).abs());
                                compared += 1;
                            }
                            (Err(_), Err(_)) => assert!(t < target.min_frames()),
                            (dp, bf) => panic!("disagreement at T={t} A={a}: {dp:?} vs {bf:?}"),
                        }
                    }
                }
            }
        }
    }
    assert_eq!(compared, 3900);
    assert!(worst < 1e-9, "worst gap {worst:e}");
}

#[test]
fn gradient_with_respect_to_logits_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for (t, a, labels) in [(5, 4, vec![1, 2, 1]), (6, 3, vec![2, 2]), (4, 3, vec![]), (12, 5, vec![3, 1, 4, 1])] {
        let target = CtcTarget::new(labels, a).unwrap();
        let logits = Matrix::uniform(t, a, 2.0, &mut r);
        let analytic = ctc_loss(&log_softmax_rows(&logits), &target).unwrap().grad_logits;
        let numeric = finite_diff_gradient(
            |theta| {
                let z = Matrix::from_vec(t, a, theta.to_vec())?;
                Ok(ctc_loss(&log_softmax_rows(&z), &target)?.loss)
            },
            logits.data(),
            DEFAULT_FD_EPS,
        )
        .unwrap();
        let report = grad_check(analytic.data(), &numeric).unwrap();
        assert!(report.passes(1e-4), "T={t} A={a}: {report:?}");
    }
}

#[test]
fn gradient_rows_sum_to_zero() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let target = CtcTarget::new(vec![1, 3, 2], 4).unwrap();
    let lp = log_softmax_rows(&Matrix::uniform(9, 4, 2.0, &mut r));
    let res = ctc_loss(&lp, &target).unwrap();
    for row in res.grad_logits.row_iter() {
        assert!(row.iter().sum::<f64>().abs() < 1e-12);
    }
}

#[test]
fn long_sequences_do_not_underflow() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let labels: Vec<usize> = (0..60).map(|i| 1 + i % 4).collect();
    let target = CtcTarget::new(labels, 5).unwrap();
    let lp = log_softmax_rows(&Matrix::uniform(400, 5, 4.0, &mut r));
    let res = ctc_loss(&lp, &target).unwrap();
    assert!(res.loss.is_finite() && res.loss > 0.0);
    assert!(res.grad_logits.is_finite());
}

#[test]
fn greedy_decode_matches_two_step_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let logits = Matrix::uniform(5, 4, 1.0, &mut r);
        let mut path = Vec::new();
        for row in logits.row_iter() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            path.push(row.iter().position(|&v| v == max).unwrap());
        }
        let mut oracle: Vec<usize> = Vec::new();
        let mut last = usize::MAX;
        for &p in &path {
            if p != last && p != BLANK {
                oracle.push(p);
            }
            last = p;
        }
        assert_eq!(greedy_decode(&logits), oracle);
    }
}

#[test]
fn greedy_output_has_no_blanks() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let t = r.random_range(1..20);
        let out = greedy_decode(&Matrix::uniform(t, 3, 1.0, &mut r));
        assert!(!out.contains(&BLANK));
    }
}

proptest! {
    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(0u8..4, 0..8),
        b in prop::collection::vec(0u8..4, 0..8),
        c in prop::collection::vec(0u8..4, 0..8),
    ) {
        let d = |x: &[u8], y: &[u8]| edit_distance(x, y).distance;
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
    }

    #[test]
    fn edit_ops_account_for_length_difference(
        a in prop::collection::vec(0u8..3, 0..10),
        b in prop::collection::vec(0u8..3, 0..10),
    ) {
        let ops = edit_distance(&a, &b);
        prop_assert_eq!(ops.distance, ops.substitutions + ops.insertions + ops.deletions);
        prop_assert_eq!(a.len() + ops.insertions, b.len() + ops.deletions);
        prop_assert!(cer(&a, &b) >= 0.0);
    }

    #[test]
    fn collapse_never_leaves_blanks(path in prop::collection::vec(0usize..4, 0..20)) {
        let out = collapse(&path);
        prop_assert!(!out.contains(&BLANK));
        prop_assert!(out.len() <= path.len());
    }
}
