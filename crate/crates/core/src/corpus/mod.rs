//! Dataset ingestion, tokenization, vocabulary and copy-aware encoding.

mod dataset;
mod encode;
mod stem;
mod tokenize;
mod vocab;

pub use dataset::{
    format_prediction_line, load_dataset, load_predictions, parse_dataset, parse_predictions,
    sample_to_json_line, split_keyphrases, Dataset, Mode, Sample,
};
pub use encode::{
    dedup_phrases, encode_sample, encode_source, encode_target, encode_tokens, order_keyphrases,
    source_tokens, split_present_absent, CorpusLimits, Document, EncodedSample,
    KeyphraseSequence,
};
pub use stem::stem;
pub use tokenize::{tokenize, DIGIT};
pub use vocab::{Vocabulary, BOS, EOS, NUM_SPECIALS, PAD, SEP, SPECIAL_TOKENS, UNK};

use crate::error::Result;

/// Vocabulary over source and target tokens of `samples`.
pub fn build_vocab(samples: &[Sample], size: usize) -> Result<Vocabulary> {
    let mut tokens: Vec<String> = Vec::new();
    for s in samples {
        tokens.extend(tokenize(&s.title));
        tokens.extend(tokenize(&s.abstract_text));
        for k in &s.keyphrases {
            tokens.extend(tokenize(k));
        }
    }
    Vocabulary::build(tokens.iter().map(String::as_str), size)
}

pub fn encode_all(samples: &[Sample], vocab: &Vocabulary, limits: &CorpusLimits) -> Vec<EncodedSample> {
    samples.iter().map(|s| encode_sample(s, vocab, limits)).collect()
}
