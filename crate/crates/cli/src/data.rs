//! Artifacts written by `preprocess` and read back by the training stages:
//! `vocab.txt` (one token per line, in id order) and `corpus.jsonl` (one
//! encoded sample per line).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kpgan::checkpoint::atomic_write;
use kpgan::corpus::{EncodedSample, Vocabulary};
use kpgan::Error;

use crate::error::{CliError, Result};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const CORPUS_FILE: &str = "corpus.jsonl";

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, |f| std::io::Write::write_all(f, text.as_bytes()))?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

pub fn vocab_text(vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for t in vocab.tokens() {
        out.push_str(t);
        out.push('\n');
    }
    out
}

pub fn corpus_text(corpus: &[EncodedSample]) -> Result<String> {
    let mut out = String::new();
    for s in corpus {
        let line = serde_json::to_string(s).map_err(|e| Error::Format(e.to_string()))?;
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

#[derive(Debug)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub corpus: Vec<EncodedSample>,
}

/// Loads a preprocessed data directory and checks every id against the
/// vocabulary.
pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let vocab_path = dir.join(VOCAB_FILE);
    let corpus_path = dir.join(CORPUS_FILE);
    for p in [&vocab_path, &corpus_path] {
        if !p.exists() {
            return Err(CliError::MissingDependency(format!(
                "{} not found; run `kpgan preprocess` first",
                p.display()
            )));
        }
    }
    let tokens = read_text(&vocab_path)?.lines().map(str::to_string).collect();
    let vocab = Vocabulary::from_tokens(tokens)?;
    let mut corpus = Vec::new();
    for (i, line) in read_text(&corpus_path)?.lines().enumerate() {
        let s: EncodedSample = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let bound = vocab.len() + s.doc.oov_list.len();
        let ids_ok = s.doc.vocab_size == vocab.len()
            && s.doc.ids.iter().all(|&id| id < vocab.len())
            && s.doc.extended_ids.iter().chain(&s.target).all(|&id| id < bound);
        if !ids_ok {
            return Err(Error::Data(format!(
                "{} line {}: ids do not match {}",
                corpus_path.display(),
                i + 1,
                vocab_path.display()
            ))
            .into());
        }
        corpus.push(s);
    }
    Ok(Prepared { vocab, corpus })
}

/// Log written next to a checkpoint.
pub fn log_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".log.jsonl");
    out.with_file_name(name)
}

pub fn json_lines<T: serde::Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Format(e.to_string()))?;
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}
