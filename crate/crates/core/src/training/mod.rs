//! Likelihood pretraining, discriminator training and adversarial
//! policy-gradient training of the generator.
//!
//! Every stage builds one graph per document, computes gradients for a
//! minibatch in parallel, sums them in document order (so results do not
//! depend on the thread count), averages, clips the global norm and applies
//! an Adagrad step.

mod adagrad;
mod disc;
mod gan;
mod mle;
mod rl;

pub use adagrad::{adagrad_update, Accumulators, Adagrad};
pub use disc::{disc_pairs, train_discriminator, train_discriminator_on_pairs, DiscPair};
pub use gan::{gan_train, mean_sampled_reward, write_round_log, GanOutcome, RoundLog};
pub use mle::{pretrain_generator, EpochLog};
pub use rl::{policy_gradient_step, reinforce_grads, PgStats, RewardBatch};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::DecodeLimits;
use crate::graph::Gradients;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Starting value of every Adagrad accumulator.
    pub adagrad_init: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    /// Discriminator epochs per call (and per adversarial round).
    pub disc_epochs: usize,
    /// Generator passes over the corpus per adversarial round.
    pub gen_steps: usize,
    pub gan_rounds: usize,
    pub max_decode_len: usize,
    pub max_phrase_len: usize,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            adagrad_init: 0.1,
            batch_size: 16,
            pretrain_epochs: 10,
            disc_epochs: 1,
            gen_steps: 1,
            gan_rounds: 5,
            max_decode_len: 40,
            max_phrase_len: 6,
            seed: 42,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !positive(self.adagrad_init) {
            return Err(Error::Config(format!("adagrad_init must be > 0, got {}", self.adagrad_init)));
        }
        if !positive(self.clip_norm) {
            return Err(Error::Config(format!("clip_norm must be > 0, got {}", self.clip_norm)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_decode_len == 0 || self.max_phrase_len == 0 {
            return Err(Error::Config("decode lengths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn decode_limits(&self) -> DecodeLimits {
        DecodeLimits {
            max_len: self.max_decode_len,
            max_phrase_len: self.max_phrase_len,
        }
    }

    pub fn optimizer(&self) -> Adagrad {
        Adagrad::new(self.learning_rate, self.adagrad_init)
    }
}

// RNG stream ids, so each stage draws from its own sequence.
const STREAM_PRETRAIN: u64 = 1;
const STREAM_DISC: u64 = 2;
const STREAM_RL: u64 = 3;
const STREAM_REWARD: u64 = 4;
const STREAM_GAN_DISC: u64 = 5;
/// Generator initialization.
pub const STREAM_INIT_GEN: u64 = 6;
/// Discriminator initialization.
pub const STREAM_INIT_DISC: u64 = 7;
/// Sampled decoding at inference time.
pub const STREAM_GENERATE: u64 = 8;

/// Per-item contribution to a minibatch: gradients of a summed loss, the
/// loss value and how many terms it covers.
struct Contribution {
    grads: Gradients,
    loss: f64,
    terms: usize,
    /// Token-level accuracy counts, where the stage tracks them.
    hits: usize,
    positions: usize,
}

/// Runs `f` over `items` in parallel and sums the results in item order.
/// Items for which `f` returns `None` contribute nothing.
fn sum_contributions<T, F>(items: &[T], f: F) -> Result<Option<Contribution>>
where
    T: Sync,
    F: Fn(&T) -> Result<Option<Contribution>> + Sync,
{
    let parts = items.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
    let mut total: Option<Contribution> = None;
    for part in parts.into_iter().flatten() {
        match &mut total {
            None => total = Some(part),
            Some(t) => {
                t.grads.accumulate(&part.grads);
                t.loss += part.loss;
                t.terms += part.terms;
                t.hits += part.hits;
                t.positions += part.positions;
            }
        }
    }
    Ok(total)
}
