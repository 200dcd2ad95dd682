use rand::RngExt;
use rayon::prelude::*;

use super::{Adagrad, TrainConfig};
use crate::corpus::Document;
use crate::discriminator::PhraseScorer;
use crate::error::{Error, Result};
use crate::generator::{greedy_decode, sample_decode, GeneratorParams, SampledSequence};
use crate::graph::{Gradients, Graph};
use crate::rng::{seeded, Rng};

/// Per-keyphrase rewards of a sampled sequence against a self-critical
/// baseline taken from the greedy decode of the same document.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardBatch {
    pub rewards: Vec<f64>,
    pub baselines: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RewardBatch {
    /// Baseline `i` is the score of the `i`-th greedy keyphrase; positions
    /// past the end of the greedy sequence use the mean greedy score, and an
    /// empty greedy sequence gives a baseline of zero.
    pub fn new(rewards: Vec<f64>, greedy_scores: &[f64]) -> Self {
        let mean = if greedy_scores.is_empty() {
            0.0
        } else {
            greedy_scores.iter().sum::<f64>() / greedy_scores.len() as f64
        };
        let baselines: Vec<f64> = (0..rewards.len())
            .map(|i| greedy_scores.get(i).copied().unwrap_or(mean))
            .collect();
        let advantages = rewards.iter().zip(&baselines).map(|(r, b)| r - b).collect();
        Self {
            rewards,
            baselines,
            advantages,
        }
    }
}

/// Surrogate loss `-sum_i A_i * sum_{t in phrase i} ln p(y_t)` and its
/// gradients, with the advantages held constant. Log-probabilities are
/// recomputed by feeding the sampled tokens back through the decoder.
pub fn reinforce_grads(
    doc: &Document,
    gen: &GeneratorParams,
    sampled: &SampledSequence,
    advantages: &[f64],
) -> Result<(f64, Gradients)> {
    if advantages.len() != sampled.groups.len() {
        return Err(Error::Dimension {
            op: "reinforce",
            lhs: vec![sampled.groups.len()],
            rhs: vec![advantages.len()],
        });
    }
    let mut g = Graph::new();
    let nodes = gen.bind(&mut g)?;
    let (log_probs, _) = nodes.sequence_log_probs(&mut g, doc, &sampled.tokens)?;
    let mut weighted = Vec::with_capacity(advantages.len());
    for (group, &a) in sampled.groups.iter().zip(advantages) {
        let members: Vec<_> = group.iter().map(|&t| log_probs[t]).collect();
        let total = g.sum(&members)?;
        weighted.push(g.affine(total, -a, 0.0));
    }
    let loss = g.sum(&weighted)?;
    Ok((g.scalar(loss), g.backward(loss)?))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PgStats {
    pub documents: usize,
    /// Documents whose sampled sequence had no keyphrases.
    pub skipped: usize,
    /// Mean reward over every sampled keyphrase.
    pub mean_reward: f64,
    pub mean_advantage: f64,
    /// Surrogate loss averaged over the documents that contributed.
    pub surrogate_loss: f64,
}

struct DocOutcome {
    grads: Gradients,
    loss: f64,
    batch: RewardBatch,
}

/// One policy-gradient update of the generator on a minibatch. The scorer
/// is only ever borrowed immutably, so its parameters cannot move.
///
/// Document `i` is sampled with `seeded(s_i)`, where `s_i` is the `i`-th
/// `u64` drawn from `rng`.
pub fn policy_gradient_step<S: PhraseScorer + ?Sized>(
    docs: &[&Document],
    gen: &mut GeneratorParams,
    opt: &mut Adagrad,
    scorer: &S,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<PgStats> {
    let limits = config.decode_limits();
    let seeds: Vec<u64> = docs.iter().map(|_| rng.random()).collect();
    let current = &*gen;
    let outcomes = docs
        .par_iter()
        .zip(&seeds)
        .map(|(&doc, &seed)| -> Result<Option<DocOutcome>> {
            let sampled = sample_decode(doc, current, limits, &mut seeded(seed))?;
            if sampled.sequence.is_empty() {
                return Ok(None);
            }
            let rewards = scorer.score_phrases(doc, &sampled.sequence)?;
            let greedy = greedy_decode(doc, current, limits)?;
            let greedy_scores = if greedy.is_empty() {
                Vec::new()
            } else {
                scorer.score_phrases(doc, &greedy)?
            };
            let batch = RewardBatch::new(rewards, &greedy_scores);
            let (loss, grads) = reinforce_grads(doc, current, &sampled, &batch.advantages)?;
            Ok(Some(DocOutcome { grads, loss, batch }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = PgStats {
        documents: docs.len(),
        ..Default::default()
    };
    let mut total: Option<Gradients> = None;
    let (mut reward_sum, mut adv_sum, mut phrases, mut used) = (0.0, 0.0, 0usize, 0usize);
    for outcome in outcomes {
        let Some(o) = outcome else {
            stats.skipped += 1;
            continue;
        };
        reward_sum += o.batch.rewards.iter().sum::<f64>();
        adv_sum += o.batch.advantages.iter().sum::<f64>();
        phrases += o.batch.rewards.len();
        stats.surrogate_loss += o.loss;
        used += 1;
        match &mut total {
            None => total = Some(o.grads),
            Some(t) => t.accumulate(&o.grads),
        }
    }
    if let Some(mut grads) = total {
        grads.scale(1.0 / used as f64);
        grads.clip_norm(config.clip_norm);
        opt.step(gen.params_mut(), &grads)?;
        stats.surrogate_loss /= used as f64;
        stats.mean_reward = reward_sum / phrases as f64;
        stats.mean_advantage = adv_sum / phrases as f64;
    }
    Ok(stats)
}
