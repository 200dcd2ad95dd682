//! Command-line driver: preprocessing, the three training stages,
//! generation, evaluation and the gradient self-check.

mod commands;
pub mod data;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "kpgan", version, about = "Adversarial keyphrase generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command that reads a run configuration.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Run configuration file (`[section]` / `key = value`).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides any config key, e.g. `--set train.learning_rate=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Directory written by `preprocess` (defaults to `paths.data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a raw dataset, build the vocabulary and encode the corpus.
    Preprocess {
        /// JSON-lines dataset with title, abstract and keyword fields.
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Maximum-likelihood pretraining of the generator.
    Pretrain {
        #[command(flatten)]
        stage: StageArgs,
    },
    /// Train the discriminator against a pretrained generator.
    TrainDisc {
        #[command(flatten)]
        stage: StageArgs,
        /// Checkpoint holding the pretrained generator.
        #[arg(long)]
        init: PathBuf,
    },
    /// Alternating adversarial training.
    TrainGan {
        #[command(flatten)]
        stage: StageArgs,
        /// Checkpoint holding the pretrained generator (and optionally a
        /// discriminator; one is trained first if absent).
        #[arg(long)]
        init: PathBuf,
    },
    /// Decode keyphrases for every record of a dataset.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset to decode; records are kept in order.
        #[arg(long)]
        input: PathBuf,
        /// Prediction file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DecodeMode::Greedy)]
        mode: DecodeMode,
        /// Sampling seed (defaults to the checkpoint's `train.seed`).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a prediction file against gold keyphrases.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare every analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Perturbs the named check's gradients (self-test of the checker).
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
}

/// Runs one command, printing its report to standard output.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess { input, out, config } => commands::preprocess(&input, &out, &config),
        Command::Pretrain { stage } => commands::pretrain(&stage),
        Command::TrainDisc { stage, init } => commands::train_disc(&stage, &init),
        Command::TrainGan { stage, init } => commands::train_gan(&stage, &init),
        Command::Generate {
            checkpoint,
            input,
            out,
            mode,
            seed,
        } => commands::generate(&checkpoint, &input, &out, mode, seed),
        Command::Evaluate {
            pred,
            gold,
            k,
            alpha,
            out,
            config,
        } => commands::evaluate(&pred, &gold, k, alpha, out.as_deref(), config.as_deref()),
        Command::Gradcheck { seed, corrupt } => commands::gradcheck(seed, corrupt.as_deref()),
    }
}

/// Applies `KPGAN_THREADS` to the global thread pool.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("KPGAN_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("KPGAN_THREADS must be a positive integer, got {value:?}")))?;
    // Fails only if the pool was already built, in which case it stays.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
