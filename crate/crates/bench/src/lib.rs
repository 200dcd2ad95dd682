//! Shared fixtures for the benchmarks.

use kpgan::corpus::{encode_tokens, Document, Vocabulary};
use kpgan::generator::{GeneratorParams, ModelDims};
use kpgan::rng::seeded;

/// A 200-token document over a 1000-word vocabulary, a few tokens OOV.
pub fn document() -> (Vocabulary, Document) {
    let words: Vec<String> = (0..1000).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::build(words.iter().map(String::as_str), 1005).unwrap();
    let tokens = (0..200)
        .map(|i| if i % 37 == 0 { format!("oov{i}") } else { format!("w{}", (i * 7919) % 1000) })
        .collect();
    let doc = encode_tokens(tokens, &vocab);
    (vocab, doc)
}

/// Generator at the default 64/128 widths.
pub fn generator(vocab: &Vocabulary) -> GeneratorParams {
    let dims = ModelDims {
        vocab_size: vocab.len(),
        ..ModelDims::default()
    };
    GeneratorParams::new(dims, &mut seeded(1))
}
