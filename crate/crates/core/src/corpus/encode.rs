//! Copy-aware encoding of documents and concatenated keyphrase targets.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::stem::stem;
use super::tokenize::tokenize;
use super::vocab::{Vocabulary, EOS, SEP, SPECIAL_TOKENS, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusLimits {
    pub max_src_len: usize,
    pub max_phrases: usize,
    pub max_phrase_len: usize,
}

impl Default for CorpusLimits {
    fn default() -> Self {
        Self {
            max_src_len: 200,
            max_phrases: 20,
            max_phrase_len: 6,
        }
    }
}

/// A source document: title, separator, abstract.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<String>,
    /// In-vocabulary ids; out-of-vocabulary tokens are `UNK`.
    pub ids: Vec<usize>,
    /// Like `ids`, but the k-th distinct OOV token gets `vocab_size + k`.
    pub extended_ids: Vec<usize>,
    /// Distinct OOV tokens in order of first occurrence.
    pub oov_list: Vec<String>,
    pub vocab_size: usize,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Size of the per-document extended vocabulary.
    pub fn extended_size(&self) -> usize {
        self.vocab_size + self.oov_list.len()
    }

    /// Maps an extended id back to text.
    pub fn token_text<'a>(&'a self, vocab: &'a Vocabulary, id: usize) -> &'a str {
        if id < self.vocab_size {
            vocab.token(id).unwrap_or(SPECIAL_TOKENS[UNK])
        } else {
            self.oov_list
                .get(id - self.vocab_size)
                .map(String::as_str)
                .unwrap_or(SPECIAL_TOKENS[UNK])
        }
    }

    /// Maps a token to its extended id: vocabulary id, then OOV slot, then UNK.
    pub fn extended_id(&self, vocab: &Vocabulary, token: &str) -> usize {
        if let Some(id) = vocab.id(token) {
            return id;
        }
        self.oov_list
            .iter()
            .position(|t| t == token)
            .map_or(UNK, |k| self.vocab_size + k)
    }
}

pub fn source_tokens(sample: &Sample, max_src_len: usize) -> Vec<String> {
    let mut tokens = tokenize(&sample.title);
    tokens.push(SPECIAL_TOKENS[SEP].to_string());
    tokens.extend(tokenize(&sample.abstract_text));
    tokens.truncate(max_src_len);
    tokens
}

pub fn encode_tokens(tokens: Vec<String>, vocab: &Vocabulary) -> Document {
    let vocab_size = vocab.len();
    let mut oov_list: Vec<String> = Vec::new();
    let mut ids = Vec::with_capacity(tokens.len());
    let mut extended_ids = Vec::with_capacity(tokens.len());
    for t in &tokens {
        match vocab.id(t) {
            Some(id) => {
                ids.push(id);
                extended_ids.push(id);
            }
            None => {
                let k = match oov_list.iter().position(|o| o == t) {
                    Some(k) => k,
                    None => {
                        oov_list.push(t.clone());
                        oov_list.len() - 1
                    }
                };
                ids.push(UNK);
                extended_ids.push(vocab_size + k);
            }
        }
    }
    Document {
        tokens,
        ids,
        extended_ids,
        oov_list,
        vocab_size,
    }
}

pub fn encode_source(sample: &Sample, vocab: &Vocabulary, limits: &CorpusLimits) -> Document {
    encode_tokens(source_tokens(sample, limits.max_src_len), vocab)
}

/// Ordered list of keyphrases, each a non-empty token-id list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyphraseSequence {
    pub phrases: Vec<Vec<usize>>,
}

impl KeyphraseSequence {
    pub fn new(phrases: Vec<Vec<usize>>) -> Self {
        Self { phrases }
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// `p1 SEP p2 SEP ... pm EOS`
    pub fn flatten(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, p) in self.phrases.iter().enumerate() {
            if i > 0 {
                out.push(SEP);
            }
            out.extend_from_slice(p);
        }
        out.push(EOS);
        out
    }

    /// Splits on `SEP` up to the first `EOS`, dropping empty phrases.
    pub fn from_flat(ids: &[usize]) -> Self {
        let mut phrases = Vec::new();
        let mut current = Vec::new();
        for &id in ids {
            match id {
                EOS => break,
                SEP => {
                    if !current.is_empty() {
                        phrases.push(std::mem::take(&mut current));
                    }
                }
                _ => current.push(id),
            }
        }
        if !current.is_empty() {
            phrases.push(current);
        }
        Self { phrases }
    }

    pub fn truncate_phrases(&mut self, max_phrase_len: usize) {
        for p in &mut self.phrases {
            p.truncate(max_phrase_len);
        }
    }

    pub fn to_text(&self, doc: &Document, vocab: &Vocabulary) -> Vec<Vec<String>> {
        self.phrases
            .iter()
            .map(|p| p.iter().map(|&id| doc.token_text(vocab, id).to_string()).collect())
            .collect()
    }
}

fn stems(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| stem(t)).collect()
}

/// First position where `phrase` occurs contiguously in `doc`, after
/// stemming both.
fn find_stemmed(doc_stems: &[String], phrase_stems: &[String]) -> Option<usize> {
    if phrase_stems.is_empty() || phrase_stems.len() > doc_stems.len() {
        return None;
    }
    doc_stems
        .windows(phrase_stems.len())
        .position(|w| w == phrase_stems)
}

/// Drops empty phrases and duplicates (compared after stemming), keeping the
/// first occurrence.
pub fn dedup_phrases(phrases: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut seen = HashSet::new();
    phrases
        .iter()
        .filter(|p| !p.is_empty() && seen.insert(stems(p)))
        .cloned()
        .collect()
}

/// Present phrases occur contiguously in the stemmed document; the rest are
/// absent. Both lists keep input order and are deduplicated.
pub fn split_present_absent(
    keyphrases: &[Vec<String>],
    doc_tokens: &[String],
) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let doc_stems = stems(doc_tokens);
    dedup_phrases(keyphrases)
        .into_iter()
        .partition(|p| find_stemmed(&doc_stems, &stems(p)).is_some())
}

/// Present phrases by first occurrence in the document, then absent phrases
/// in their original order.
pub fn order_keyphrases(keyphrases: &[Vec<String>], doc_tokens: &[String]) -> Vec<Vec<String>> {
    let doc_stems = stems(doc_tokens);
    let mut present = Vec::new();
    let mut absent = Vec::new();
    for p in dedup_phrases(keyphrases) {
        match find_stemmed(&doc_stems, &stems(&p)) {
            Some(pos) => present.push((pos, p)),
            None => absent.push(p),
        }
    }
    present.sort_by_key(|(pos, _)| *pos);
    present.into_iter().map(|(_, p)| p).chain(absent).collect()
}

/// Flat target ids in the document's extended vocabulary.
pub fn encode_target(
    keyphrases: &[Vec<String>],
    doc: &Document,
    vocab: &Vocabulary,
    limits: &CorpusLimits,
) -> Vec<usize> {
    let phrases = order_keyphrases(keyphrases, &doc.tokens)
        .into_iter()
        .take(limits.max_phrases)
        .map(|p| {
            p.iter()
                .take(limits.max_phrase_len)
                .map(|t| doc.extended_id(vocab, t))
                .collect()
        })
        .collect();
    KeyphraseSequence::new(phrases).flatten()
}

/// A sample ready for training or decoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSample {
    pub doc: Document,
    pub target: Vec<usize>,
    /// Tokenized gold keyphrases, in dataset order.
    pub gold: Vec<Vec<String>>,
}

impl EncodedSample {
    /// Gold keyphrases as extended-id phrases, in target order.
    pub fn gold_sequence(&self) -> KeyphraseSequence {
        KeyphraseSequence::from_flat(&self.target)
    }
}

pub fn encode_sample(sample: &Sample, vocab: &Vocabulary, limits: &CorpusLimits) -> EncodedSample {
    let doc = encode_source(sample, vocab, limits);
    let gold: Vec<Vec<String>> = sample.keyphrases.iter().map(|k| tokenize(k)).collect();
    let target = encode_target(&gold, &doc, vocab, limits);
    EncodedSample { doc, target, gold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn vocab(words: &str) -> Vocabulary {
        Vocabulary::build(words.split_whitespace(), 100).unwrap()
    }

    #[test]
    fn oov_tokens_get_extended_ids() {
        let v = vocab("neural gen");
        let doc = encode_tokens(toks("neural kp gen"), &v);
        let vs = v.len();
        assert_eq!(doc.ids, vec![v.id("neural").unwrap(), UNK, v.id("gen").unwrap()]);
        assert_eq!(
            doc.extended_ids,
            vec![v.id("neural").unwrap(), vs, v.id("gen").unwrap()]
        );
        assert_eq!(doc.oov_list, ["kp"]);
    }

    #[test]
    fn no_oov_means_identical_ids() {
        let v = vocab("a b c");
        let doc = encode_tokens(toks("c a b"), &v);
        assert_eq!(doc.ids, doc.extended_ids);
        assert!(doc.oov_list.is_empty());
    }

    #[test]
    fn repeated_oov_shares_a_slot() {
        let v = vocab("x");
        let doc = encode_tokens(toks("kp x kp"), &v);
        assert_eq!(doc.oov_list, ["kp"]);
        assert_eq!(doc.extended_ids[0], v.len());
        assert_eq!(doc.extended_ids[2], v.len());
    }

    #[test]
    fn source_joins_title_and_abstract_with_sep() {
        let v = vocab("a b");
        let doc = encode_source(&Sample::new("A", "b c", &[]), &v, &CorpusLimits::default());
        assert_eq!(doc.tokens, ["a", "<sep>", "b", "c"]);
        assert_eq!(doc.ids[1], SEP);
    }

    #[test]
    fn target_layout() {
        let v = vocab("a b c");
        let doc = encode_tokens(toks("z"), &v);
        let ids = encode_target(
            &[toks("a"), toks("b c")],
            &doc,
            &v,
            &CorpusLimits::default(),
        );
        let id = |t| v.id(t).unwrap();
        assert_eq!(ids, vec![id("a"), SEP, id("b"), id("c"), EOS]);
    }

    #[test]
    fn target_uses_oov_slot_or_unk() {
        let v = vocab("a");
        let doc = encode_tokens(toks("a kp"), &v);
        let ids = encode_target(&[toks("kp"), toks("never")], &doc, &v, &CorpusLimits::default());
        assert_eq!(ids, vec![v.len(), SEP, UNK, EOS]);
    }

    #[test]
    fn empty_target_is_eos() {
        let v = vocab("a");
        let doc = encode_tokens(toks("a"), &v);
        assert_eq!(encode_target(&[], &doc, &v, &CorpusLimits::default()), vec![EOS]);
    }

    #[test]
    fn present_phrases_come_first_in_document_order() {
        let doc = toks("deep neural networks for keyphrase generation");
        let ordered = order_keyphrases(
            &[toks("quantum"), toks("keyphrase generation"), toks("neural network")],
            &doc,
        );
        assert_eq!(
            ordered,
            vec![toks("neural network"), toks("keyphrase generation"), toks("quantum")]
        );
    }

    #[test]
    fn target_truncation() {
        let v = vocab("a b c d e f g h");
        let doc = encode_tokens(toks("z"), &v);
        let limits = CorpusLimits {
            max_src_len: 10,
            max_phrases: 2,
            max_phrase_len: 2,
        };
        let ids = encode_target(&[toks("a b c"), toks("d"), toks("e")], &doc, &v, &limits);
        let id = |t| v.id(t).unwrap();
        assert_eq!(ids, vec![id("a"), id("b"), SEP, id("d"), EOS]);
    }

    #[test]
    fn present_absent_split() {
        let doc = toks("we train neural networks");
        let (p, a) = split_present_absent(&[toks("neural network")], &doc);
        assert_eq!(p.len(), 1);
        assert!(a.is_empty());
        let (p, a) = split_present_absent(&[toks("quantum computing")], &doc);
        assert!(p.is_empty());
        assert_eq!(a.len(), 1);
        let (p, a) = split_present_absent(&[toks("we neural")], &doc);
        assert!(p.is_empty(), "non-contiguous tokens are absent");
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn empty_decode_splits() {
        assert!(KeyphraseSequence::from_flat(&[EOS, 7, 8]).is_empty());
        let s = KeyphraseSequence::from_flat(&[9, SEP, SEP, 10, EOS]);
        assert_eq!(s.phrases, vec![vec![9], vec![10]]);
    }

    proptest! {
        #[test]
        fn flatten_split_round_trip(phrases in prop::collection::vec(
            prop::collection::vec(5usize..40, 1..5), 0..6)
        ) {
            let seq = KeyphraseSequence::new(phrases);
            let flat = seq.flatten();
            let m = seq.len();
            let total: usize = seq.phrases.iter().map(Vec::len).sum();
            // m - 1 separators plus EOS; a lone EOS when m = 0
            prop_assert_eq!(flat.len(), total + m.max(1));
            prop_assert_eq!(KeyphraseSequence::from_flat(&flat), seq);
        }

        #[test]
        fn present_absent_partition(
            doc in prop::collection::vec(0usize..6, 1..12),
            phrases in prop::collection::vec(prop::collection::vec(0usize..6, 1..3), 0..6),
        ) {
            let words = ["alpha", "beta", "gammas", "gamma", "delta", "eps"];
            let doc: Vec<String> = doc.iter().map(|&i| words[i].to_string()).collect();
            let phrases: Vec<Vec<String>> = phrases
                .iter()
                .map(|p| p.iter().map(|&i| words[i].to_string()).collect())
                .collect();
            let (present, absent) = split_present_absent(&phrases, &doc);
            let deduped = dedup_phrases(&phrases);
            prop_assert_eq!(present.len() + absent.len(), deduped.len());
            for p in &present {
                prop_assert!(!absent.contains(p));
                prop_assert!(deduped.contains(p));
            }
            for a in &absent {
                prop_assert!(deduped.contains(a));
            }
        }

        #[test]
        fn encoded_ids_stay_in_extended_range(
            src in prop::collection::vec(0usize..12, 1..15),
            tgt in prop::collection::vec(prop::collection::vec(0usize..14, 1..3), 0..4),
        ) {
            let words: Vec<String> = (0..14).map(|i| format!("w{}", (b'a' + i as u8) as char)).collect();
            let v = Vocabulary::build(words[..5].iter().map(String::as_str), 100).unwrap();
            let doc = encode_tokens(src.iter().map(|&i| words[i].clone()).collect(), &v);
            let gold: Vec<Vec<String>> = tgt.iter().map(|p| p.iter().map(|&i| words[i].clone()).collect()).collect();
            let ids = encode_target(&gold, &doc, &v, &CorpusLimits::default());
            let bound = doc.extended_size();
            prop_assert!(doc.extended_ids.iter().all(|&i| i < bound));
            prop_assert!(ids.iter().all(|&i| i < bound));
            for (i, &e) in doc.extended_ids.iter().enumerate() {
                prop_assert_eq!(e >= v.len(), doc.ids[i] == UNK && doc.oov_list.contains(&doc.tokens[i]));
            }
        }
    }
}
