use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{sum_contributions, Adagrad, Contribution, TrainConfig, STREAM_DISC};
use crate::corpus::{Document, EncodedSample, KeyphraseSequence};
use crate::discriminator::DiscriminatorParams;
use crate::error::{Error, Result};
use crate::generator::{greedy_decode, GeneratorParams};
use crate::graph::Graph;
use crate::rng::{derived, Rng};

/// One curated (label 1) and one generated (label 0) sequence for the same
/// document. Empty sequences contribute no terms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscPair {
    pub doc: Document,
    pub real: KeyphraseSequence,
    pub fake: KeyphraseSequence,
}

/// Pairs every document's gold sequence with the generator's greedy output.
pub fn disc_pairs(corpus: &[EncodedSample], gen: &GeneratorParams, config: &TrainConfig) -> Result<Vec<DiscPair>> {
    let limits = config.decode_limits();
    corpus
        .par_iter()
        .map(|s| {
            Ok(DiscPair {
                doc: s.doc.clone(),
                real: s.gold_sequence(),
                fake: greedy_decode(&s.doc, gen, limits)?,
            })
        })
        .collect()
}

/// Trains D to separate curated keyphrases from the generator's greedy
/// decodes. Returns the mean per-keyphrase loss of every epoch.
pub fn train_discriminator(
    corpus: &[EncodedSample],
    gen: &GeneratorParams,
    disc: DiscriminatorParams,
    config: &TrainConfig,
) -> Result<(DiscriminatorParams, Vec<f64>)> {
    config.validate()?;
    if config.disc_epochs == 0 {
        return Ok((disc, Vec::new()));
    }
    let pairs = disc_pairs(corpus, gen, config)?;
    train_discriminator_on_pairs(&pairs, disc, config)
}

pub fn train_discriminator_on_pairs(
    pairs: &[DiscPair],
    mut disc: DiscriminatorParams,
    config: &TrainConfig,
) -> Result<(DiscriminatorParams, Vec<f64>)> {
    config.validate()?;
    let mut opt = config.optimizer();
    let mut rng = derived(config.seed, STREAM_DISC);
    let log = run_epochs(pairs, &mut disc, &mut opt, config, &mut rng)?;
    Ok((disc, log))
}

pub(super) fn run_epochs(
    pairs: &[DiscPair],
    disc: &mut DiscriminatorParams,
    opt: &mut Adagrad,
    config: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if config.disc_epochs == 0 {
        return Ok(Vec::new());
    }
    if pairs.iter().all(|p| p.fake.is_empty()) {
        return Err(Error::Data(
            "every generated sequence is empty; nothing to train the discriminator against".into(),
        ));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(config.disc_epochs);
    for _ in 0..config.disc_epochs {
        order.shuffle(rng);
        let (mut loss, mut terms) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let current = &*disc;
            let sum = sum_contributions(batch, |&i| pair_grads(&pairs[i], current))?;
            if let Some(mut sum) = sum {
                loss += sum.loss;
                terms += sum.terms;
                sum.grads.scale(1.0 / sum.terms as f64);
                sum.grads.clip_norm(config.clip_norm);
                opt.step(disc.params_mut(), &sum.grads)?;
            }
        }
        log.push(loss / terms.max(1) as f64);
    }
    Ok(log)
}

/// Mean per-keyphrase loss over `pairs` without updating anything.
pub(super) fn pairs_loss(pairs: &[DiscPair], disc: &DiscriminatorParams) -> Result<f64> {
    let parts = pairs
        .par_iter()
        .map(|p| pair_grads(p, disc))
        .collect::<Result<Vec<_>>>()?;
    let (loss, terms) = parts
        .iter()
        .flatten()
        .fold((0.0, 0), |(l, t), c| (l + c.loss, t + c.terms));
    Ok(loss / terms.max(1) as f64)
}

fn pair_grads(pair: &DiscPair, disc: &DiscriminatorParams) -> Result<Option<Contribution>> {
    let mut g = Graph::new();
    let nodes = disc.bind(&mut g)?;
    let mut terms = Vec::new();
    if !pair.real.is_empty() {
        terms.extend(nodes.bce_terms(&mut g, &pair.doc, &pair.real.phrases, true)?);
    }
    if !pair.fake.is_empty() {
        terms.extend(nodes.bce_terms(&mut g, &pair.doc, &pair.fake.phrases, false)?);
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let loss = g.sum(&terms)?;
    Ok(Some(Contribution {
        grads: g.backward(loss)?,
        loss: g.scalar(loss),
        terms: terms.len(),
        hits: 0,
        positions: 0,
    }))
}
