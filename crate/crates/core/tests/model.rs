use dfsmn_san::ctc::CtcTarget;
use dfsmn_san::datapipe::{compute_cmvn, Frontend, SequenceBatch};
use dfsmn_san::layers::{MemoryKind, Parameters};
use dfsmn_san::model::{
    expected_tags, load_weights, param_count, read_weight_header, LayerTag, Model, ModelConfig, ModelKind,
};
use dfsmn_san::numerics::{finite_diff_gradient, grad_check, Matrix, DEFAULT_FD_EPS};
use dfsmn_san::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny(kind: ModelKind, memory: MemoryKind, n: usize) -> ModelConfig {
    ModelConfig {
        kind,
        input_dim: 3,
        model_dim: 4,
        heads: 2,
        dfsmn_blocks_total: 2,
        san_insert_every: 1,
        san_layers_pure: 2,
        lookback_order: 2,
        lookahead_order: 1,
        hidden_units: 5,
        projection_dim: 4,
        memory_variant: memory,
        memory_n: n,
        output_labels: 4,
        d_ff: 6,
        dropout: 0.1,
        ffn_in_san: true,
        pe_before_san: true,
    }
}

/// Perturbs every parameter so identity FIR taps and zero biases are exercised too.
fn jitter(model: &mut Model, seed: u64) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    for m in model.params_mut() {
        m.data_mut().iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
    }
}

#[test]
fn whole_model_ctc_gradient_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for kind in [ModelKind::DfsmnSan, ModelKind::Dfsmn, ModelKind::San] {
        for (mem, n) in [(MemoryKind::None, 0), (MemoryKind::KeyValue, 2), (MemoryKind::InputEmbedding, 3)] {
            if kind == ModelKind::Dfsmn && mem != MemoryKind::None {
                continue;
            }
            let mut model = Model::build(&tiny(kind, mem, n), 4).unwrap();
            jitter(&mut model, 5);
            let x = Matrix::uniform(6, 3, 1.0, &mut r);
            let target = CtcTarget::new(vec![1, 3, 2], 4).unwrap();
            let (_, grads) = model.loss_and_gradients(&x, &target, None).unwrap();
            let theta = model.flatten();
            let numeric = finite_diff_gradient(
                |p| {
                    let mut m = model.clone();
                    m.assign_flat(p)?;
                    Ok(m.loss_and_gradients(&x, &target, None)?.0)
                },
                &theta,
                DEFAULT_FD_EPS,
            )
            .unwrap();
            let report = grad_check(&grads.flatten(), &numeric).unwrap();
            assert!(report.passes(1e-4), "{kind} {mem}: {report:?}");
        }
    }
}

fn random_batch(r: &mut ChaCha8Rng, dim: usize, count: usize, max_len: usize) -> SequenceBatch {
    let feats = (0..count)
        .map(|_| {
            let t = r.random_range(1..=max_len);
            Matrix::uniform(t, dim, 1.5, r)
        })
        .collect();
    SequenceBatch::new(feats, vec![]).unwrap()
}

#[test]
fn batched_forward_equals_single_sequence_forward() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    for kind in [ModelKind::DfsmnSan, ModelKind::Dfsmn, ModelKind::San] {
        let mut model = Model::build(&tiny(kind, MemoryKind::KeyValue, 2), 3).unwrap();
        jitter(&mut model, 8);
        for _ in 0..10 {
            let batch = random_batch(&mut r, 3, 4, 12);
            let together = model.forward(&batch).unwrap();
            for (x, y) in batch.features().iter().zip(&together) {
                let alone = model.forward_sequence(x).unwrap();
                assert_eq!(alone.shape(), y.shape());
                assert!(alone.max_abs_diff(y) < 1e-10, "{kind}");
            }
        }
    }
}

#[test]
fn identical_sequences_in_one_batch_get_identical_logits() {
    let model = Model::build(&tiny(ModelKind::DfsmnSan, MemoryKind::InputEmbedding, 2), 0).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let x = Matrix::uniform(5, 3, 1.0, &mut r);
    let batch = SequenceBatch::new(vec![x.clone(), Matrix::uniform(9, 3, 1.0, &mut r), x], vec![]).unwrap();
    let out = model.forward(&batch).unwrap();
    assert_eq!(out[0], out[2]);
}

#[test]
fn repeated_forwards_are_bitwise_equal() {
    let model = Model::build(&tiny(ModelKind::San, MemoryKind::KeyValue, 2), 0).unwrap();
    let batch = random_batch(&mut ChaCha8Rng::seed_from_u64(3), 3, 6, 10);
    assert_eq!(model.forward(&batch).unwrap(), model.forward(&batch).unwrap());
}

#[test]
fn zero_memory_slots_match_the_memoryless_model() {
    let batch = random_batch(&mut ChaCha8Rng::seed_from_u64(4), 3, 5, 10);
    for kind in [ModelKind::DfsmnSan, ModelKind::San] {
        let base = Model::build(&tiny(kind, MemoryKind::None, 0), 6).unwrap();
        let reference = base.forward(&batch).unwrap();
        for mem in [MemoryKind::KeyValue, MemoryKind::InputEmbedding] {
            let cfg = tiny(kind, mem, 0);
            let m = Model::build(&cfg, 6).unwrap();
            assert_eq!(m.num_params(), base.num_params());
            assert_eq!(param_count(&cfg), param_count(base.config()));
            for (a, b) in m.forward(&batch).unwrap().iter().zip(&reference) {
                assert!(a.max_abs_diff(b) < 1e-12);
            }
        }
    }
}

#[test]
fn memory_variants_share_base_weights() {
    let a = Model::build(&tiny(ModelKind::DfsmnSan, MemoryKind::None, 0), 1).unwrap();
    let b = Model::build(&tiny(ModelKind::DfsmnSan, MemoryKind::KeyValue, 4), 1).unwrap();
    let base: Vec<_> = a.params().into_iter().collect();
    let with_mem: Vec<_> = b.params().into_iter().filter(|(n, _)| !n.contains(".mem_")).collect();
    assert_eq!(base, with_mem);
}

#[test]
fn weights_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let batch = random_batch(&mut r, 3, 4, 8);
    for (kind, mem) in [
        (ModelKind::DfsmnSan, MemoryKind::KeyValue),
        (ModelKind::San, MemoryKind::InputEmbedding),
        (ModelKind::Dfsmn, MemoryKind::None),
    ] {
        let mut model = Model::build(&tiny(kind, mem, 3), 7).unwrap();
        jitter(&mut model, 1);
        model.frontend = Frontend {
            stack: 1,
            stride: 1,
            cmvn: Some(compute_cmvn(batch.features()).unwrap()),
        };
        model.save(&path).unwrap();
        let back = load_weights(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.frontend.cmvn.as_ref().unwrap().mean, model.frontend.cmvn.as_ref().unwrap().mean);
        assert_eq!(back.forward(&batch).unwrap(), model.forward(&batch).unwrap());
        let header = read_weight_header(&path).unwrap();
        assert_eq!(header.trainable_params(), model.num_params());
        assert_eq!(header.memory_params(), model.memory_params());
    }
}

fn field_of(e: Error) -> String {
    match e {
        Error::Format { field, .. } => field,
        other => panic!("expected a format error, got {other}"),
    }
}

#[test]
fn damaged_weight_files_are_named_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    let model = Model::build(&tiny(ModelKind::DfsmnSan, MemoryKind::None, 0), 7).unwrap();
    model.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert_eq!(field_of(load_weights(&path).unwrap_err()), "output.bias.payload");

    std::fs::write(&path, &bytes[..10]).unwrap();
    assert_eq!(field_of(load_weights(&path).unwrap_err()), "magic");

    let mut edited = bytes.clone();
    let needle = b"config.input_dim = 3";
    let at = edited.windows(needle.len()).position(|w| w == needle).unwrap();
    edited[at + needle.len() - 1] = b'7';
    std::fs::write(&path, &edited).unwrap();
    assert_eq!(field_of(load_weights(&path).unwrap_err()), "layers.0.dfsmn.input_weight.shape");

    let mut bad_key = bytes.clone();
    let needle = b"config.heads";
    let at = bad_key.windows(needle.len()).position(|w| w == needle).unwrap();
    bad_key[at + 7..at + 12].copy_from_slice(b"hexds");
    std::fs::write(&path, &bad_key).unwrap();
    assert_eq!(field_of(load_weights(&path).unwrap_err()), "config.hexds");

    let mut extra = bytes.clone();
    extra.push(0);
    std::fs::write(&path, &extra).unwrap();
    assert_eq!(field_of(load_weights(&path).unwrap_err()), "payload");
}

#[test]
fn full_scale_tag_sequence() {
    let cfg = ModelConfig::full_dfsmn_san();
    let tags: String = expected_tags(&cfg).iter().map(|t| t.to_string()).collect();
    let block = format!("{}S", "D".repeat(10));
    assert_eq!(tags, block.repeat(3));
    assert_eq!(cfg.num_san_layers(), 3);
    assert_eq!(expected_tags(&ModelConfig::full_san()).len(), 10);
    assert_eq!(expected_tags(&ModelConfig::full_dfsmn()).len(), 30);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn construction_rule_holds(every in 1usize..6, groups in 1usize..6) {
        let cfg = ModelConfig {
            dfsmn_blocks_total: every * groups,
            san_insert_every: every,
            ..tiny(ModelKind::DfsmnSan, MemoryKind::None, 0)
        };
        let model = Model::build(&cfg, 0).unwrap();
        let tags = model.tags();
        prop_assert_eq!(&tags, &expected_tags(&cfg));
        prop_assert_eq!(tags.iter().filter(|t| **t == LayerTag::San).count(), groups);
        for (i, t) in tags.iter().enumerate() {
            prop_assert_eq!(*t == LayerTag::San, (i + 1) % (every + 1) == 0);
        }
        prop_assert_eq!(model.num_params(), param_count(&cfg));
    }

    #[test]
    fn non_divisible_totals_are_rejected(every in 2usize..6, total in 1usize..30) {
        prop_assume!(total % every != 0);
        let cfg = ModelConfig {
            dfsmn_blocks_total: total,
            san_insert_every: every,
            ..tiny(ModelKind::DfsmnSan, MemoryKind::None, 0)
        };
        prop_assert!(Model::build(&cfg, 0).is_err());
    }
}
