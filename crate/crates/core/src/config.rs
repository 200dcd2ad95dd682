//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers. Every key is optional; unknown or repeated keys are rejected.
//!
//! ```text
//! [model]
//! embed_dim = 64
//! hidden_dim = 128
//!
//! [train]
//! learning_rate = 0.0005
//! seed = 42
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::{CorpusLimits, NUM_SPECIALS};
use crate::error::{Error, Result};
use crate::evaluation::{DEFAULT_ALPHA, DEFAULT_K};
use crate::generator::ModelDims;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Upper bound on the vocabulary, specials included.
    pub vocab_size: usize,
    pub limits: CorpusLimits,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub train: TrainConfig,
    pub k: usize,
    pub alpha: f64,
    /// Preprocessed data directory, when not given on the command line.
    pub data: Option<PathBuf>,
    /// Validation dataset for adversarial reward tracking.
    pub valid: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dims = ModelDims::default();
        Self {
            vocab_size: dims.vocab_size,
            limits: CorpusLimits::default(),
            embed_dim: dims.embed_dim,
            hidden_dim: dims.hidden_dim,
            train: TrainConfig::default(),
            k: DEFAULT_K,
            alpha: DEFAULT_ALPHA,
            data: None,
            valid: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut section: Option<String> = None;
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let parse_err = |message: String| Error::Parse { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .ok_or_else(|| parse_err(format!("malformed section header {line:?}")))?;
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            let section = section
                .as_deref()
                .ok_or_else(|| parse_err(format!("key {:?} appears before any [section]", key.trim())))?;
            let full = format!("{section}.{}", key.trim());
            if !seen.insert(full.clone()) {
                return Err(parse_err(format!("duplicate key {full}")));
            }
            config.set(&full, value.trim()).map_err(|e| match e {
                Error::Config(m) => parse_err(m),
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one `section.key`; the config is not re-validated.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "corpus.vocab_size" => self.vocab_size = parse_value(key, value)?,
            "corpus.max_src_len" => self.limits.max_src_len = parse_value(key, value)?,
            "corpus.max_phrases" => self.limits.max_phrases = parse_value(key, value)?,
            "corpus.max_phrase_len" => {
                let v = parse_value(key, value)?;
                self.limits.max_phrase_len = v;
                t.max_phrase_len = v;
            }
            "model.embed_dim" => self.embed_dim = parse_value(key, value)?,
            "model.hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "train.learning_rate" => t.learning_rate = parse_value(key, value)?,
            "train.adagrad_init" => t.adagrad_init = parse_value(key, value)?,
            "train.batch_size" => t.batch_size = parse_value(key, value)?,
            "train.pretrain_epochs" => t.pretrain_epochs = parse_value(key, value)?,
            "train.disc_epochs" => t.disc_epochs = parse_value(key, value)?,
            "train.gen_steps" => t.gen_steps = parse_value(key, value)?,
            "train.gan_rounds" => t.gan_rounds = parse_value(key, value)?,
            "train.max_decode_len" => t.max_decode_len = parse_value(key, value)?,
            "train.seed" => t.seed = parse_value(key, value)?,
            "train.clip_norm" => t.clip_norm = parse_value(key, value)?,
            "eval.k" => self.k = parse_value(key, value)?,
            "eval.alpha" => self.alpha = parse_value(key, value)?,
            "paths.data" => self.data = parse_path(value),
            "paths.valid" => self.valid = parse_path(value),
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Applies a `section.key=value` override and re-validates.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override must be key=value, got {assignment:?}")))?;
        self.set(key.trim(), value.trim())?;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.vocab_size <= NUM_SPECIALS {
            return Err(Error::Config(format!(
                "corpus.vocab_size must exceed {NUM_SPECIALS}, got {}",
                self.vocab_size
            )));
        }
        let positive = [
            ("corpus.max_src_len", self.limits.max_src_len),
            ("corpus.max_phrases", self.limits.max_phrases),
            ("corpus.max_phrase_len", self.limits.max_phrase_len),
            ("model.embed_dim", self.embed_dim),
            ("model.hidden_dim", self.hidden_dim),
            ("eval.k", self.k),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{key} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("eval.alpha must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Model dimensions for a vocabulary of `vocab_len` entries.
    pub fn dims(&self, vocab_len: usize) -> ModelDims {
        ModelDims {
            vocab_size: vocab_len,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let sections: [(&str, Vec<(&str, String)>); 5] = [
            (
                "corpus",
                vec![
                    ("vocab_size", self.vocab_size.to_string()),
                    ("max_src_len", self.limits.max_src_len.to_string()),
                    ("max_phrases", self.limits.max_phrases.to_string()),
                    ("max_phrase_len", self.limits.max_phrase_len.to_string()),
                ],
            ),
            (
                "model",
                vec![
                    ("embed_dim", self.embed_dim.to_string()),
                    ("hidden_dim", self.hidden_dim.to_string()),
                ],
            ),
            (
                "train",
                vec![
                    ("learning_rate", t.learning_rate.to_string()),
                    ("adagrad_init", t.adagrad_init.to_string()),
                    ("batch_size", t.batch_size.to_string()),
                    ("pretrain_epochs", t.pretrain_epochs.to_string()),
                    ("disc_epochs", t.disc_epochs.to_string()),
                    ("gen_steps", t.gen_steps.to_string()),
                    ("gan_rounds", t.gan_rounds.to_string()),
                    ("max_decode_len", t.max_decode_len.to_string()),
                    ("seed", t.seed.to_string()),
                    ("clip_norm", t.clip_norm.to_string()),
                ],
            ),
            (
                "eval",
                vec![("k", self.k.to_string()), ("alpha", self.alpha.to_string())],
            ),
            (
                "paths",
                vec![("data", path(&self.data)), ("valid", path(&self.valid))],
            ),
        ];
        for (i, (name, keys)) in sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{name}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}
