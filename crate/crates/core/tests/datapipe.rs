use dfsmn_san::ctc::{cer, collapse};
use dfsmn_san::datapipe::{
    apply_cmvn, compute_cmvn, generate_corpus, read_features, read_labels, stack_and_subsample,
    write_features, write_labels, SyntheticTaskSpec,
};
use dfsmn_san::numerics::Matrix;
use dfsmn_san::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn clean_corpus_is_solved_by_nearest_template() {
    let spec = SyntheticTaskSpec {
        alphabet_size: 4,
        noise_std: 0.0,
        train_sequences: 200,
        test_sequences: 0,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).unwrap();
    for (x, y) in corpus.train.features().iter().zip(corpus.train.targets()) {
        let path: Vec<usize> = x
            .row_iter()
            .map(|row| {
                (1..spec.alphabet_size)
                    .min_by(|&a, &b| {
                        let d = |k: usize| corpus.templates.row(k).iter().zip(row).map(|(t, v)| (t - v).powi(2)).sum::<f64>();
                        d(a).total_cmp(&d(b))
                    })
                    .unwrap()
            })
            .collect();
        assert_eq!(cer(y.labels(), &collapse(&path)), 0.0);
    }
}

#[test]
fn cmvn_normalises_its_fitting_corpus() {
    let spec = SyntheticTaskSpec { global_bias: true, train_sequences: 40, test_sequences: 0, ..Default::default() };
    let corpus = generate_corpus(&spec).unwrap();
    let stats = compute_cmvn(corpus.train.features()).unwrap();
    let normed = corpus.train.map_features(|x| apply_cmvn(x, &stats)).unwrap();
    let again = compute_cmvn(normed.features()).unwrap();
    assert!(again.mean.iter().all(|m| m.abs() < 1e-8));
    assert!(again.variance.iter().all(|v| (v - 1.0).abs() < 1e-6));
    // re-normalising a normalised corpus is (nearly) the identity
    let twice = normed.map_features(|x| apply_cmvn(x, &again)).unwrap();
    for (a, b) in twice.features().iter().zip(normed.features()) {
        assert!(a.max_abs_diff(b) < 1e-6);
    }
}

#[test]
fn feature_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feats.bin");
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let feats: Vec<Matrix> = (1..6).map(|t| Matrix::uniform(t, 3, 2.0, &mut r)).collect();
    write_features(&path, &feats).unwrap();
    let back = read_features(&path).unwrap();
    assert_eq!(back.len(), feats.len());
    for (a, b) in feats.iter().zip(&back) {
        assert_eq!(a.map(|v| v as f32 as f64), *b);
    }
}

#[test]
fn label_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.txt");
    let spec = SyntheticTaskSpec { train_sequences: 12, test_sequences: 0, ..Default::default() };
    let corpus = generate_corpus(&spec).unwrap();
    write_labels(&path, corpus.train.targets()).unwrap();
    assert_eq!(read_labels(&path, spec.alphabet_size).unwrap(), corpus.train.targets());
}

fn format_field(e: Error) -> String {
    match e {
        Error::Format { field, .. } => field,
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn malformed_feature_files_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");

    std::fs::write(&path, b"").unwrap();
    assert_eq!(format_field(read_features(&path).unwrap_err()), "magic");

    std::fs::write(&path, b"NOT-A-FEATURE-FILE\n").unwrap();
    assert_eq!(format_field(read_features(&path).unwrap_err()), "magic");

    let feats = vec![Matrix::filled(4, 2, 1.5)];
    write_features(&path, &feats).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(format_field(read_features(&path).unwrap_err()), "record[0].payload");

    let mut garbled = bytes.clone();
    garbled.extend_from_slice(b"4 x\n");
    std::fs::write(&path, &garbled).unwrap();
    assert_eq!(format_field(read_features(&path).unwrap_err()), "record[1].header");
}

#[test]
fn bad_label_tokens_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.txt");
    std::fs::write(&path, "1 2\n3 q\n").unwrap();
    assert_eq!(format_field(read_labels(&path, 5).unwrap_err()), "line[2]");
    std::fs::write(&path, "1 7\n").unwrap();
    assert!(matches!(read_labels(&path, 5), Err(Error::CtcLabel { label: 7, .. })));
}

proptest! {
    #[test]
    fn stacked_length_is_ceiling(t in 1usize..50, stack in 1usize..10, stride in 1usize..6, f in 1usize..4) {
        let x = Matrix::from_vec(t, f, (0..t * f).map(|v| v as f64).collect()).unwrap();
        let y = stack_and_subsample(&x, stack, stride).unwrap();
        prop_assert_eq!(y.shape(), (t.div_ceil(stride), stack * f));
        // the first block of every output frame is the window's start frame
        for m in 0..y.rows() {
            prop_assert_eq!(&y.row(m)[..f], x.row(m * stride));
        }
    }
}
