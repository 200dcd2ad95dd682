use rand::seq::SliceRandom;
use serde::Serialize;

use super::{sum_contributions, Contribution, TrainConfig, STREAM_PRETRAIN};
use crate::corpus::EncodedSample;
use crate::error::{Error, Result};
use crate::generator::{teacher_forced_grads, GeneratorParams};
use crate::rng::derived;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean teacher-forced NLL over the epoch's documents.
    pub loss: f64,
    /// Fraction of target positions whose argmax was the gold token.
    pub accuracy: f64,
}

/// Maximum-likelihood training of the generator on gold keyphrase
/// sequences. With zero epochs the parameters come back untouched.
pub fn pretrain_generator(
    corpus: &[EncodedSample],
    mut params: GeneratorParams,
    config: &TrainConfig,
) -> Result<(GeneratorParams, Vec<EpochLog>)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("pretraining needs a non-empty corpus".into()));
    }
    let mut rng = derived(config.seed, STREAM_PRETRAIN);
    let mut opt = config.optimizer();
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut log = Vec::with_capacity(config.pretrain_epochs);
    for epoch in 1..=config.pretrain_epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut correct, mut total) = (0.0, 0usize, 0usize);
        for batch in order.chunks(config.batch_size) {
            let current = &params;
            let sum = sum_contributions(batch, |&i| {
                let s = &corpus[i];
                let r = teacher_forced_grads(&s.doc, &s.target, current)?;
                Ok(Some(Contribution {
                    grads: r.grads,
                    loss: r.loss,
                    terms: 1,
                    hits: r.correct,
                    positions: r.total,
                }))
            })?;
            if let Some(mut sum) = sum {
                loss += sum.loss;
                correct += sum.hits;
                total += sum.positions;
                sum.grads.scale(1.0 / sum.terms as f64);
                sum.grads.clip_norm(config.clip_norm);
                opt.step(params.params_mut(), &sum.grads)?;
            }
        }
        log.push(EpochLog {
            epoch,
            loss: loss / corpus.len() as f64,
            accuracy: correct as f64 / total.max(1) as f64,
        });
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_all, CorpusLimits, Sample, Vocabulary};
    use crate::generator::{teacher_forced_nll, ModelDims};
    use crate::rng::seeded;

    fn corpus() -> (Vocabulary, Vec<EncodedSample>) {
        let samples = vec![
            Sample::new("graph search", "we study graph search methods", &["graph search"]),
            Sample::new("neural parsing", "a parser built from neural nets", &["parsing", "neural nets"]),
        ];
        let vocab = crate::corpus::build_vocab(&samples, 40).unwrap();
        let enc = encode_all(&samples, &vocab, &CorpusLimits::default());
        (vocab, enc)
    }

    fn dims(v: usize) -> ModelDims {
        ModelDims {
            vocab_size: v,
            embed_dim: 8,
            hidden_dim: 8,
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let (v, data) = corpus();
        let init = GeneratorParams::new(dims(v.len()), &mut seeded(1));
        let config = TrainConfig {
            pretrain_epochs: 0,
            ..Default::default()
        };
        let (out, log) = pretrain_generator(&data, init.clone(), &config).unwrap();
        assert!(out.params().bit_identical(init.params()));
        assert!(log.is_empty());
    }

    #[test]
    fn empty_corpus_is_a_config_error() {
        let init = GeneratorParams::new(dims(10), &mut seeded(1));
        let r = pretrain_generator(&[], init, &TrainConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn single_sample_overfit_is_monotone() {
        let (v, data) = corpus();
        let one = &data[..1];
        let init = GeneratorParams::new(dims(v.len()), &mut seeded(3));
        let config = TrainConfig {
            pretrain_epochs: 1,
            learning_rate: 0.05,
            batch_size: 1,
            ..Default::default()
        };
        let mut params = init;
        let mut opt_losses = vec![teacher_forced_nll(&one[0].doc, &one[0].target, &params).unwrap()];
        // step by hand so the loss can be measured after every update
        let mut opt = config.optimizer();
        for _ in 0..50 {
            let r = teacher_forced_grads(&one[0].doc, &one[0].target, &params).unwrap();
            let mut g = r.grads;
            g.clip_norm(config.clip_norm);
            opt.step(params.params_mut(), &g).unwrap();
            opt_losses.push(teacher_forced_nll(&one[0].doc, &one[0].target, &params).unwrap());
        }
        for w in opt_losses.windows(2) {
            assert!(w[1] < w[0], "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn pretraining_is_deterministic_and_reduces_loss() {
        let (v, data) = corpus();
        let init = GeneratorParams::new(dims(v.len()), &mut seeded(5));
        let config = TrainConfig {
            pretrain_epochs: 20,
            learning_rate: 0.05,
            batch_size: 2,
            ..Default::default()
        };
        let (a, log_a) = pretrain_generator(&data, init.clone(), &config).unwrap();
        let (b, log_b) = pretrain_generator(&data, init, &config).unwrap();
        assert!(a.params().bit_identical(b.params()));
        assert_eq!(log_a, log_b);
        assert!(log_a.last().unwrap().loss < log_a[0].loss);
    }
}
