//! Command-line front end: config parsing, training, evaluation, the
//! gradient-check harness, weight inspection and corpus generation.

mod config;
mod eval;
mod gradcheck;
mod inspect;
mod train;

pub use config::{DataFiles, GradcheckSettings, Optimizer, TrainConfig};
pub use eval::{cmd_eval, FEATURES_EXT, LABELS_EXT};
pub use gradcheck::{run_gradchecks, CheckRow, GradcheckTable, GRADCHECK_TOLERANCE};
pub use inspect::{inspect, InspectReport};
pub use train::{
    clip_gradients, cmd_train, evaluate, prepare_data, score_logits, train, train_from, EpochRecord, EvalReport,
    PreparedData, RunLog, TrainOutcome, RUNLOG_FILE, WEIGHTS_FILE,
};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::datapipe::{generate_corpus, write_features, write_labels, SequenceBatch};
use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dfsmn-san", version, about = "DFSMN-SAN acoustic models with persistent-memory attention")]
struct Cli {
    /// Overrides `train.seed` (and `gradcheck.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Bitwise-reproducible run: dropout off, wall times recorded as 0.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Directory for outputs (weights, run log, generated corpora).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; writes model.bin and runlog.txt.
    Train { config: PathBuf },
    /// Greedy-decoding CER of a saved model on one or more labelled sets.
    Eval { weights: PathBuf, data: PathBuf },
    /// Finite-difference checks of every layer, memory variant and the CTC loss.
    Gradcheck { config: PathBuf },
    /// Layer shapes and parameter totals of a weight file.
    Inspect { weights: PathBuf },
    /// Write the configured synthetic corpus as feature/label files.
    GenCorpus { config: PathBuf },
}

fn load_config(path: &Path, cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::from_file(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.gradcheck.seed = seed;
    }
    cfg.deterministic |= cli.deterministic;
    Ok(cfg)
}

fn write_set(out_dir: &Path, name: &str, set: &SequenceBatch) -> Result<()> {
    write_features(&out_dir.join(format!("{name}.{FEATURES_EXT}")), set.features())?;
    write_labels(&out_dir.join(format!("{name}.{LABELS_EXT}")), set.targets())
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Train { config } => {
            let cfg = load_config(config, cli)?;
            let outcome = cmd_train(&cfg, &cli.out_dir)?;
            if let Some(last) = outcome.log.last() {
                println!("epoch {} loss {} cer {}", last.epoch, last.loss, last.cer);
            }
            println!("weights: {}", cli.out_dir.join(WEIGHTS_FILE).display());
            Ok(EXIT_OK)
        }
        Command::Eval { weights, data } => {
            for (name, report) in cmd_eval(weights, data)? {
                println!("{name}\t{}", report.cer);
                eprintln!(
                    "{name}: CER {:.2}% ({} errors / {} labels, {} sequences)",
                    100.0 * report.cer,
                    report.errors,
                    report.reference_labels,
                    report.sequences
                );
            }
            Ok(EXIT_OK)
        }
        Command::Gradcheck { config } => {
            let mut cfg = load_config(config, cli)?;
            cfg.deterministic = true;
            let table = run_gradchecks(&cfg.gradcheck)?;
            print!("{}", table.to_text());
            Ok(if table.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Inspect { weights } => {
            print!("{}", inspect(weights)?.text);
            Ok(EXIT_OK)
        }
        Command::GenCorpus { config } => {
            let mut cfg = load_config(config, cli)?;
            if let Some(seed) = cli.seed {
                cfg.corpus.seed = seed;
            }
            std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
            let corpus = generate_corpus(&cfg.corpus)?;
            write_set(&cli.out_dir, "train", &corpus.train)?;
            write_set(&cli.out_dir, "test", &corpus.test)?;
            println!("wrote {} train / {} test sequences to {}", corpus.train.len(), corpus.test.len(), cli.out_dir.display());
            Ok(EXIT_OK)
        }
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for usage and configuration errors, 2 for failed checks or invalid data.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::Io { .. } => EXIT_USAGE,
                _ => EXIT_CHECK_FAILED,
            }
        }
    }
}
