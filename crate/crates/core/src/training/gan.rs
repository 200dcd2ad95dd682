use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;

use super::disc::{disc_pairs, pairs_loss, run_epochs};
use super::rl::policy_gradient_step;
use super::{TrainConfig, STREAM_GAN_DISC, STREAM_REWARD, STREAM_RL};
use crate::corpus::{Document, EncodedSample};
use crate::discriminator::{DiscriminatorParams, PhraseScorer};
use crate::error::{Error, Result};
use crate::generator::{sample_decode, GeneratorParams};
use crate::rng::{derived, seeded};

/// Rounds whose reward moved less than this count towards the plateau.
const PLATEAU_DELTA: f64 = 1e-3;
/// Consecutive flat rounds that end training early.
const PLATEAU_ROUNDS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    /// Mean discriminator score of sampled keyphrases on the validation
    /// documents, after this round's generator updates.
    pub mean_reward: f64,
    pub d_loss: f64,
    pub g_loss: f64,
}

#[derive(Clone, Debug)]
pub struct GanOutcome {
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
    /// Mean sampled reward before any adversarial update.
    pub initial_reward: f64,
    pub rounds: Vec<RoundLog>,
    /// Whether training stopped on the reward plateau rule.
    pub converged: bool,
}

/// Mean reward over every keyphrase sampled for `docs`. The sampling seeds
/// depend only on the config, so successive calls see comparable noise.
pub fn mean_sampled_reward<S: PhraseScorer + ?Sized>(
    docs: &[&Document],
    gen: &GeneratorParams,
    scorer: &S,
    config: &TrainConfig,
) -> Result<f64> {
    let mut rng = derived(config.seed, STREAM_REWARD);
    let seeds: Vec<u64> = docs.iter().map(|_| rng.random()).collect();
    let limits = config.decode_limits();
    let per_doc = docs
        .par_iter()
        .zip(&seeds)
        .map(|(&doc, &seed)| -> Result<(f64, usize)> {
            let s = sample_decode(doc, gen, limits, &mut seeded(seed))?;
            if s.sequence.is_empty() {
                return Ok((0.0, 0));
            }
            let r = scorer.score_phrases(doc, &s.sequence)?;
            Ok((r.iter().sum(), r.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sum, count) = per_doc
        .into_iter()
        .fold((0.0, 0), |(s, c), (ds, dc)| (s + ds, c + dc));
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Alternates policy-gradient epochs of G against a frozen D with D epochs
/// on fresh generator output, for `config.gan_rounds` rounds or until the
/// validation reward plateaus. Rewards are measured on `valid`, or on the
/// training documents when `valid` is empty.
pub fn gan_train(
    corpus: &[EncodedSample],
    valid: &[EncodedSample],
    mut gen: GeneratorParams,
    mut disc: DiscriminatorParams,
    config: &TrainConfig,
) -> Result<GanOutcome> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("adversarial training needs a non-empty corpus".into()));
    }
    let reward_docs: Vec<&Document> = if valid.is_empty() { corpus } else { valid }
        .iter()
        .map(|s| &s.doc)
        .collect();
    let train_docs: Vec<&Document> = corpus.iter().map(|s| &s.doc).collect();

    let initial_reward = mean_sampled_reward(&reward_docs, &gen, &disc, config)?;
    let mut g_opt = config.optimizer();
    let mut d_opt = config.optimizer();
    let mut g_rng = derived(config.seed, STREAM_RL);
    let mut d_rng = derived(config.seed, STREAM_GAN_DISC);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();

    let mut rounds = Vec::new();
    let mut previous = initial_reward;
    let mut flat = 0;
    let mut converged = false;
    for round in 1..=config.gan_rounds {
        let (mut g_loss, mut g_docs) = (0.0, 0usize);
        for _ in 0..config.gen_steps {
            order.shuffle(&mut g_rng);
            for batch in order.chunks(config.batch_size) {
                let docs: Vec<&Document> = batch.iter().map(|&i| train_docs[i]).collect();
                let stats = policy_gradient_step(&docs, &mut gen, &mut g_opt, &disc, config, &mut g_rng)?;
                let used = stats.documents - stats.skipped;
                g_loss += stats.surrogate_loss * used as f64;
                g_docs += used;
            }
        }
        let mean_reward = mean_sampled_reward(&reward_docs, &gen, &disc, config)?;

        let pairs = disc_pairs(corpus, &gen, config)?;
        let d_log = run_epochs(&pairs, &mut disc, &mut d_opt, config, &mut d_rng)?;
        let d_loss = match d_log.last() {
            Some(&l) => l,
            None => pairs_loss(&pairs, &disc)?,
        };

        rounds.push(RoundLog {
            round,
            mean_reward,
            d_loss,
            g_loss: if g_docs == 0 { 0.0 } else { g_loss / g_docs as f64 },
        });
        if (mean_reward - previous).abs() < PLATEAU_DELTA {
            flat += 1;
        } else {
            flat = 0;
        }
        previous = mean_reward;
        if flat >= PLATEAU_ROUNDS {
            converged = true;
            break;
        }
    }
    Ok(GanOutcome {
        generator: gen,
        discriminator: disc,
        initial_reward,
        rounds,
        converged,
    })
}

/// One JSON object per line.
pub fn write_round_log(path: impl AsRef<Path>, rounds: &[RoundLog]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in rounds {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, encode_all, CorpusLimits, Sample};
    use crate::generator::ModelDims;

    fn fixture() -> (Vec<EncodedSample>, GeneratorParams, DiscriminatorParams) {
        let samples = vec![
            Sample::new("graph search", "we study graph search methods", &["graph search"]),
            Sample::new("neural parsing", "a parser built from neural nets", &["parsing", "neural nets"]),
            Sample::new("sparse codes", "learning sparse codes for images", &["sparse codes"]),
        ];
        let vocab = build_vocab(&samples, 40).unwrap();
        let data = encode_all(&samples, &vocab, &CorpusLimits::default());
        let dims = ModelDims {
            vocab_size: vocab.len(),
            embed_dim: 6,
            hidden_dim: 6,
        };
        (
            data,
            GeneratorParams::new(dims, &mut seeded(1)),
            DiscriminatorParams::new(dims, &mut seeded(2)),
        )
    }

    fn config(rounds: usize) -> TrainConfig {
        TrainConfig {
            gan_rounds: rounds,
            learning_rate: 0.05,
            max_decode_len: 10,
            batch_size: 2,
            ..Default::default()
        }
    }

    #[test]
    fn zero_rounds_return_inputs() {
        let (data, gen, disc) = fixture();
        let out = gan_train(&data, &[], gen.clone(), disc.clone(), &config(0)).unwrap();
        assert!(out.generator.params().bit_identical(gen.params()));
        assert!(out.discriminator.params().bit_identical(disc.params()));
        assert!(out.rounds.is_empty());
    }

    #[test]
    fn round_log_has_one_entry_per_round_and_is_deterministic() {
        let (data, gen, disc) = fixture();
        let a = gan_train(&data, &[], gen.clone(), disc.clone(), &config(2)).unwrap();
        let b = gan_train(&data, &[], gen, disc, &config(2)).unwrap();
        assert_eq!(a.rounds.len(), 2);
        assert_eq!(a.rounds[1].round, 2);
        assert_eq!(a.rounds, b.rounds);
        assert!(a.generator.params().bit_identical(b.generator.params()));
        assert!(a.discriminator.params().bit_identical(b.discriminator.params()));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rounds.jsonl");
        write_round_log(&path, &a.rounds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        for key in ["round", "mean_reward", "d_loss", "g_loss"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
}
