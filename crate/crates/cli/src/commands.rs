use std::path::Path;

use kpgan::checkpoint::Checkpoint;
use kpgan::config::RunConfig;
use kpgan::corpus::{
    build_vocab, encode_all, encode_source, format_prediction_line, load_dataset, load_predictions, Mode,
    Vocabulary, SPECIAL_TOKENS, UNK,
};
use kpgan::discriminator::DiscriminatorParams;
use kpgan::evaluation::evaluate_dataset;
use kpgan::generator::{greedy_decode, sample_decode, GeneratorParams};
use kpgan::gradcheck::run_gradchecks;
use kpgan::rng::{derived, seeded};
use kpgan::training::{
    gan_train, pretrain_generator, train_discriminator, STREAM_GENERATE, STREAM_INIT_DISC, STREAM_INIT_GEN,
};
use kpgan::Error;
use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{corpus_text, json_lines, load_prepared, log_path, vocab_text, write_text, Prepared, CORPUS_FILE, VOCAB_FILE};
use crate::error::{CliError, Result};
use crate::{ConfigArgs, DecodeMode, StageArgs};

fn resolve_config(args: &ConfigArgs, base: Option<&str>) -> Result<RunConfig> {
    let mut config = match (&args.config, base) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(text)) => RunConfig::parse(text)?,
        (None, None) => RunConfig::default(),
    };
    for o in &args.overrides {
        config.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    Ok(config)
}

fn prepared_for(stage: &StageArgs, config: &RunConfig) -> Result<Prepared> {
    let dir = stage
        .data
        .as_deref()
        .or(config.data.as_deref())
        .ok_or_else(|| CliError::Usage("no data directory: pass --data or set paths.data".into()))?;
    load_prepared(dir)
}

fn load_init(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(CliError::MissingDependency(format!(
            "checkpoint {} not found; run `kpgan pretrain` first",
            path.display()
        )));
    }
    Ok(Checkpoint::load(path)?)
}

fn pretrained_generator(ckpt: &Checkpoint, path: &Path) -> Result<GeneratorParams> {
    ckpt.generator()?.ok_or_else(|| {
        CliError::MissingDependency(format!("{} holds no pretrained generator", path.display()))
    })
}

fn same_vocab(a: &Vocabulary, b: &Vocabulary) -> Result<()> {
    if a.tokens() != b.tokens() {
        return Err(Error::Data("data directory vocabulary differs from the checkpoint's".into()).into());
    }
    Ok(())
}

pub fn preprocess(input: &Path, out: &Path, args: &ConfigArgs) -> Result<()> {
    let config = resolve_config(args, None)?;
    let dataset = load_dataset(input, Mode::Train)?;
    let vocab = build_vocab(&dataset.samples, config.vocab_size)?;
    let corpus = encode_all(&dataset.samples, &vocab, &config.limits);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join(VOCAB_FILE), &vocab_text(&vocab))?;
    write_text(&out.join(CORPUS_FILE), &corpus_text(&corpus)?)?;

    let tokens: usize = corpus.iter().map(|s| s.doc.ids.len()).sum();
    let unknown = corpus.iter().flat_map(|s| &s.doc.ids).filter(|&&id| id == UNK).count();
    let oov_rate = if tokens == 0 { 0.0 } else { unknown as f64 / tokens as f64 };
    println!("samples kept: {}", dataset.samples.len());
    println!("samples dropped: {}", dataset.dropped);
    println!("vocabulary size: {}", vocab.len());
    println!("source OOV rate: {oov_rate:.4}");
    Ok(())
}

pub fn pretrain(stage: &StageArgs) -> Result<()> {
    let config = resolve_config(&stage.config, None)?;
    let data = prepared_for(stage, &config)?;
    let mut rng = derived(config.train.seed, STREAM_INIT_GEN);
    let gen = GeneratorParams::new(config.dims(data.vocab.len()), &mut rng);
    let (gen, log) = pretrain_generator(&data.corpus, gen, &config.train)?;
    for e in &log {
        println!("epoch {:>3}  loss {:.4}  accuracy {:.4}", e.epoch, e.loss, e.accuracy);
    }
    Checkpoint::new(config.to_text(), data.vocab, Some(&gen), None).save(&stage.out)?;
    write_text(&log_path(&stage.out), &json_lines(&log)?)?;
    println!("wrote {}", stage.out.display());
    Ok(())
}

#[derive(Serialize)]
struct DiscEpoch {
    epoch: usize,
    loss: f64,
}

/// Fresh D trained against `gen`'s greedy decodes.
fn initial_discriminator(
    data: &Prepared,
    gen: &GeneratorParams,
    config: &RunConfig,
) -> Result<(DiscriminatorParams, Vec<DiscEpoch>)> {
    let mut rng = derived(config.train.seed, STREAM_INIT_DISC);
    let disc = DiscriminatorParams::new(gen.dims(), &mut rng);
    let (disc, losses) = train_discriminator(&data.corpus, gen, disc, &config.train)?;
    let log: Vec<DiscEpoch> = losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| DiscEpoch { epoch: i + 1, loss })
        .collect();
    for e in &log {
        println!("discriminator epoch {:>3}  loss {:.4}", e.epoch, e.loss);
    }
    Ok((disc, log))
}

pub fn train_disc(stage: &StageArgs, init: &Path) -> Result<()> {
    let ckpt = load_init(init)?;
    let gen = pretrained_generator(&ckpt, init)?;
    let config = resolve_config(&stage.config, Some(&ckpt.config))?;
    let data = prepared_for(stage, &config)?;
    same_vocab(&data.vocab, &ckpt.vocab)?;

    let (disc, log) = initial_discriminator(&data, &gen, &config)?;
    Checkpoint::new(config.to_text(), ckpt.vocab, Some(&gen), Some(&disc)).save(&stage.out)?;
    write_text(&log_path(&stage.out), &json_lines(&log)?)?;
    println!("wrote {}", stage.out.display());
    Ok(())
}

pub fn train_gan(stage: &StageArgs, init: &Path) -> Result<()> {
    let ckpt = load_init(init)?;
    let gen = pretrained_generator(&ckpt, init)?;
    let config = resolve_config(&stage.config, Some(&ckpt.config))?;
    let data = prepared_for(stage, &config)?;
    same_vocab(&data.vocab, &ckpt.vocab)?;

    let disc = match ckpt.discriminator()? {
        Some(d) => d,
        None => initial_discriminator(&data, &gen, &config)?.0,
    };
    let valid = match &config.valid {
        Some(path) => {
            let ds = load_dataset(path, Mode::Train)?;
            encode_all(&ds.samples, &ckpt.vocab, &config.limits)
        }
        None => Vec::new(),
    };
    let outcome = gan_train(&data.corpus, &valid, gen, disc, &config.train)?;
    println!("round   0  reward {:.4}", outcome.initial_reward);
    for r in &outcome.rounds {
        println!(
            "round {:>3}  reward {:.4}  d_loss {:.4}  g_loss {:.4}",
            r.round, r.mean_reward, r.d_loss, r.g_loss
        );
    }
    if outcome.converged {
        println!("stopped early: reward plateaued");
    }
    Checkpoint::new(
        config.to_text(),
        ckpt.vocab,
        Some(&outcome.generator),
        Some(&outcome.discriminator),
    )
    .save(&stage.out)?;
    write_text(&log_path(&stage.out), &json_lines(&outcome.rounds)?)?;
    println!("wrote {}", stage.out.display());
    Ok(())
}

/// Special tokens carry no text; phrases made only of them are dropped.
fn printable(phrases: Vec<Vec<String>>) -> Vec<Vec<String>> {
    phrases
        .into_iter()
        .map(|p| p.into_iter().filter(|t| !SPECIAL_TOKENS.contains(&t.as_str())).collect::<Vec<_>>())
        .filter(|p| !p.is_empty())
        .collect()
}

pub fn generate(checkpoint: &Path, input: &Path, out: &Path, mode: DecodeMode, seed: Option<u64>) -> Result<()> {
    if !checkpoint.exists() {
        return Err(CliError::MissingDependency(format!("checkpoint {} not found", checkpoint.display())));
    }
    let ckpt = Checkpoint::load(checkpoint)?;
    let gen = pretrained_generator(&ckpt, checkpoint)?;
    let config = RunConfig::parse(&ckpt.config)?;
    let dataset = load_dataset(input, Mode::Test)?;
    let limits = config.train.decode_limits();
    let docs: Vec<_> = dataset
        .samples
        .iter()
        .map(|s| encode_source(s, &ckpt.vocab, &config.limits))
        .collect();

    let mut rng = derived(seed.unwrap_or(config.train.seed), STREAM_GENERATE);
    let seeds: Vec<u64> = docs.iter().map(|_| rng.random()).collect();
    let lines = docs
        .par_iter()
        .zip(&seeds)
        .map(|(doc, &s)| -> kpgan::Result<String> {
            let seq = match mode {
                DecodeMode::Greedy => greedy_decode(doc, &gen, limits)?,
                DecodeMode::Sample => sample_decode(doc, &gen, limits, &mut seeded(s))?.sequence,
            };
            Ok(format_prediction_line(&printable(seq.to_text(doc, &ckpt.vocab))))
        })
        .collect::<kpgan::Result<Vec<_>>>()?;
    let mut text = String::new();
    for l in &lines {
        text.push_str(l);
        text.push('\n');
    }
    write_text(out, &text)?;
    println!("wrote {} predictions to {}", lines.len(), out.display());
    Ok(())
}

pub fn evaluate(
    pred: &Path,
    gold: &Path,
    k: Option<usize>,
    alpha: Option<f64>,
    out: Option<&Path>,
    config: Option<&Path>,
) -> Result<()> {
    let config = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let k = k.unwrap_or(config.k);
    let alpha = alpha.unwrap_or(config.alpha);
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1), got {alpha}")).into());
    }
    let predictions = load_predictions(pred)?;
    let gold_set = load_dataset(gold, Mode::Test)?;
    let name = gold
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = evaluate_dataset(&name, &predictions, &gold_set.samples, k, alpha)?;
    println!("{report}");
    if let Some(out) = out {
        write_text(out, &report.to_json())?;
    }
    Ok(())
}

pub fn gradcheck(seed: u64, corrupt: Option<&str>) -> Result<()> {
    let report = run_gradchecks(seed, corrupt)?;
    println!("{report}");
    if report.passed() {
        return Ok(());
    }
    let failed: Vec<String> = report
        .failures()
        .map(|c| format!("{} (max relative error {:.3e})", c.name, c.max_rel_error))
        .collect();
    Err(CliError::GradcheckFailed(failed.join(", ")))
}
