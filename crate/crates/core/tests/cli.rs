use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dfsmn_san::cli::{inspect, RunLog};

const BIN: &str = env!("CARGO_BIN_EXE_dfsmn-san");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn binary")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "corpus.train_sequences = 12\ncorpus.test_sequences = 4\ncorpus.feat_dim = 6\n\
         model.model_dim = 8\nmodel.heads = 2\nmodel.hidden_units = 12\nmodel.projection_dim = 8\n\
         model.dfsmn_blocks_total = 2\nmodel.san_insert_every = 2\nmodel.d_ff = 16\n\
         train.epochs = 3\ntrain.learning_rate = 0.002\n{extra}"
    );
    let path = dir.join("small.conf");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn gradcheck_passes_and_flags_a_corrupted_gradient() {
    let good = configs().join("gradcheck.conf");
    let out = run(&["gradcheck", good.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["attention_kv_n1", "attention_kv_n4", "attention_ie_n1", "attention_ie_n4", "ctc_loss", "model_ctc"] {
        assert!(table.lines().any(|l| l.starts_with(name) && l.ends_with("ok")), "{name} missing in\n{table}");
    }

    let dir = tempfile::tempdir().unwrap();
    for check in ["attention_kv_n4", "dfsmn_block", "ctc_loss"] {
        let bad = dir.path().join(format!("{check}.conf"));
        std::fs::write(&bad, format!("gradcheck.corrupt = {check}\n")).unwrap();
        let out = run(&["gradcheck", bad.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{check}");
        let table = String::from_utf8(out.stdout).unwrap();
        let row = table.lines().find(|l| l.starts_with(check)).unwrap();
        assert!(row.ends_with("FAIL"), "{row}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("typo.conf");
    std::fs::write(&conf, "train.learnin_rate = 0.1\n").unwrap();
    let out = run(&["train", conf.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.learnin_rate"));

    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["train", dir.path().join("missing.conf").to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn generate_train_eval_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path(), "");
    let data = dir.path().join("data");
    let out_dir = dir.path().join("run");
    let gen = run(&["gen-corpus", conf.to_str().unwrap(), "--out-dir", data.to_str().unwrap()]);
    assert_eq!(code(&gen), 0);
    for f in ["train.feats", "train.labels", "test.feats", "test.labels"] {
        assert!(data.join(f).is_file(), "{f}");
    }

    let train = run(&["--deterministic", "--out-dir", out_dir.to_str().unwrap(), "train", conf.to_str().unwrap()]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    let log = RunLog::parse(&std::fs::read_to_string(out_dir.join("runlog.txt")).unwrap()).unwrap();
    assert_eq!(log.records.len(), 3);
    assert!(log.records.iter().all(|r| r.seconds == 0.0 && r.loss.is_finite()));

    let weights = out_dir.join("model.bin");
    let eval = run(&["eval", weights.to_str().unwrap(), data.to_str().unwrap()]);
    assert_eq!(code(&eval), 0, "{}", String::from_utf8_lossy(&eval.stderr));
    let text = String::from_utf8(eval.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["test", "train"]);
    for line in text.lines() {
        let cer: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!(cer >= 0.0);
    }

    let single = run(&["eval", weights.to_str().unwrap(), data.join("test.feats").to_str().unwrap()]);
    assert_eq!(code(&single), 0);

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(code(&run(&["eval", weights.to_str().unwrap(), empty.to_str().unwrap()])), 2);

    let shown = run(&["inspect", weights.to_str().unwrap()]);
    assert_eq!(code(&shown), 0);
    let shown = String::from_utf8(shown.stdout).unwrap();
    assert!(shown.contains("layers: DDS"), "{shown}");
    assert!(shown.contains("memory parameters: 0 (0.0000% of total)"), "{shown}");
}

#[test]
fn inspect_reports_memory_share() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path(), "model.memory_variant = key_value\nmodel.memory_n = 5\ntrain.epochs = 1\n");
    let out = run(&["--out-dir", dir.path().to_str().unwrap(), "train", conf.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = inspect(&dir.path().join("model.bin")).unwrap();
    // one SAN layer with 5 key and 5 value slots of width 8
    assert_eq!(report.memory_params, 2 * 5 * 8);
    assert!((report.memory_share - 80.0 / report.total_params as f64).abs() < 1e-15);
}

#[test]
fn seed_flag_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let conf = small_config(dir.path(), "train.epochs = 1\n");
    let logs: Vec<String> = ["1", "2"]
        .iter()
        .map(|seed| {
            let out_dir = dir.path().join(seed);
            let out = run(&["--deterministic", "--seed", seed, "--out-dir", out_dir.to_str().unwrap(), "train", conf.to_str().unwrap()]);
            assert_eq!(code(&out), 0);
            std::fs::read_to_string(out_dir.join("runlog.txt")).unwrap()
        })
        .collect();
    assert_ne!(logs[0], logs[1]);
}

#[test]
fn shipped_configs_parse() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            let cfg = dfsmn_san::cli::TrainConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            cfg.model.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 6);
    let full = dfsmn_san::cli::TrainConfig::from_file(&configs().join("full_dfsmn_san.conf")).unwrap();
    let preset = dfsmn_san::model::ModelConfig::full_dfsmn_san().with_memory(full.model.memory_variant, full.model.memory_n);
    assert_eq!(full.model, dfsmn_san::model::ModelConfig { dropout: full.model.dropout, ..preset });
}
