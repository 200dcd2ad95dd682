//! Keyphrase evaluation: F1@k, F1@M over present and absent keyphrases, and
//! alpha-nDCG@k over the full prediction list.
//!
//! Phrases are compared after tokenizing and Porter-stemming every token.
//! Scores are macro-averaged over documents; a document with no gold
//! keyphrases in a split does not count towards that split.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::corpus::{source_tokens, split_present_absent, stem, tokenize, Sample};
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Tokenize, stem each token, join with single spaces.
pub fn normalize_phrase(phrase: &str) -> String {
    join_stems(&tokenize(phrase))
}

fn join_stems(tokens: &[String]) -> String {
    tokens.iter().map(|t| stem(t)).collect::<Vec<_>>().join(" ")
}

fn dedup(phrases: &[String]) -> Vec<&String> {
    let mut seen = HashSet::new();
    phrases
        .iter()
        .filter(|p| !p.is_empty() && seen.insert(p.as_str()))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(matches: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { matches as f64 / predicted as f64 };
        let recall = matches as f64 / gold as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Precision, recall and F1 of the first `k` deduplicated predictions, with
/// precision always over `k`. `None` when there is no gold phrase.
pub fn f1_at_k(preds: &[String], gold: &[String], k: usize) -> Option<Prf> {
    let gold: HashSet<&String> = dedup(gold).into_iter().collect();
    if gold.is_empty() {
        return None;
    }
    let matches = dedup(preds).into_iter().take(k).filter(|p| gold.contains(p)).count();
    Some(Prf::new(matches, k, gold.len()))
}

/// As [`f1_at_k`] with `k` set to the number of deduplicated predictions.
pub fn f1_at_m(preds: &[String], gold: &[String]) -> Option<Prf> {
    let gold: HashSet<&String> = dedup(gold).into_iter().collect();
    if gold.is_empty() {
        return None;
    }
    let preds = dedup(preds);
    let matches = preds.iter().filter(|p| gold.contains(*p)).count();
    Some(Prf::new(matches, preds.len(), gold.len()))
}

/// Gain of each prediction in order: a prediction matching a gold phrase
/// already matched `c` times before earns `(1 - alpha)^c`.
fn gains(preds: &[String], gold: &HashSet<&String>, alpha: f64) -> Vec<f64> {
    let mut seen: std::collections::HashMap<&String, i32> = Default::default();
    preds
        .iter()
        .map(|p| {
            if !gold.contains(p) {
                return 0.0;
            }
            let c = seen.entry(p).or_insert(0);
            let g = (1.0 - alpha).powi(*c);
            *c += 1;
            g
        })
        .collect()
}

fn dcg(gains: &[f64], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, g)| g / ((r + 2) as f64).log2())
        .sum()
}

/// Alpha-nDCG@k with each gold phrase as one nugget. Predictions are not
/// deduplicated: repeating a phrase is exactly what the metric discounts.
/// The ideal ranking is the best reordering of the same predictions, so the
/// value never exceeds 1; it is 0 when no prediction matches.
pub fn alpha_ndcg_at_k(preds: &[String], gold: &[String], alpha: f64, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let gold: HashSet<&String> = dedup(gold).into_iter().collect();
    let actual = gains(preds, &gold, alpha);
    // Whatever the order, the j-th copy of a nugget earns (1 - alpha)^(j-1),
    // so the ideal ordering simply sorts those gains in decreasing order.
    let mut ideal = actual.clone();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(&actual, k) / idcg)
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn roc_auc(positives: &[f64], negatives: &[f64]) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Input("AUC needs at least one positive and one negative".into()));
    }
    let mut wins = 0.0;
    for &p in positives {
        for &n in negatives {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (positives.len() * negatives.len()) as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SplitScores {
    pub f1_at_k: f64,
    pub f1_at_m: f64,
    /// Documents with at least one gold phrase in this split.
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub documents: usize,
    pub k: usize,
    pub alpha: f64,
    pub extractive: SplitScores,
    pub abstractive: SplitScores,
    pub alpha_ndcg: f64,
    pub alpha_ndcg_evaluated: usize,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    count: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn value(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

fn split_scores(per_doc: &[(Option<Prf>, Option<Prf>)]) -> SplitScores {
    let (mut at_k, mut at_m) = (Mean::default(), Mean::default());
    for (k, m) in per_doc {
        if let (Some(k), Some(m)) = (k, m) {
            at_k.add(k.f1);
            at_m.add(m.f1);
        }
    }
    SplitScores {
        f1_at_k: at_k.value(),
        f1_at_m: at_m.value(),
        evaluated: at_k.count,
        skipped: per_doc.len() - at_k.count,
    }
}

/// Scores one prediction list per gold sample, aligned by position.
pub fn evaluate_dataset(
    dataset: &str,
    predictions: &[Vec<String>],
    gold: &[Sample],
    k: usize,
    alpha: f64,
) -> Result<EvaluationReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{} prediction lines for {} gold records",
            predictions.len(),
            gold.len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut extractive = Vec::with_capacity(gold.len());
    let mut abstractive = Vec::with_capacity(gold.len());
    let mut ndcg = Mean::default();
    for (preds, sample) in predictions.iter().zip(gold) {
        let doc = source_tokens(sample, usize::MAX);
        let pred_tokens: Vec<Vec<String>> = preds.iter().map(|p| tokenize(p)).collect();
        let gold_tokens: Vec<Vec<String>> = sample.keyphrases.iter().map(|p| tokenize(p)).collect();
        let (pp, pa) = split_present_absent(&pred_tokens, &doc);
        let (gp, ga) = split_present_absent(&gold_tokens, &doc);
        let norm = |ps: &[Vec<String>]| ps.iter().map(|p| join_stems(p)).collect::<Vec<_>>();
        let (pp, pa, gp, ga) = (norm(&pp), norm(&pa), norm(&gp), norm(&ga));
        extractive.push((f1_at_k(&pp, &gp, k), f1_at_m(&pp, &gp)));
        abstractive.push((f1_at_k(&pa, &ga, k), f1_at_m(&pa, &ga)));

        let all_preds: Vec<String> = pred_tokens
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| join_stems(p))
            .collect();
        let all_gold = norm(&gold_tokens);
        if !dedup(&all_gold).is_empty() {
            ndcg.add(alpha_ndcg_at_k(&all_preds, &all_gold, alpha, k)?);
        }
    }
    Ok(EvaluationReport {
        dataset: dataset.to_string(),
        documents: gold.len(),
        k,
        alpha,
        extractive: split_scores(&extractive),
        abstractive: split_scores(&abstractive),
        alpha_ndcg: ndcg.value(),
        alpha_ndcg_evaluated: ndcg.count,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.k;
        writeln!(f, "dataset: {} ({} documents)", self.dataset, self.documents)?;
        writeln!(f, "{:<12} {:>8} {:>8} {:>6}", "split", format!("F1@{k}"), "F1@M", "docs")?;
        for (name, s) in [("extractive", &self.extractive), ("abstractive", &self.abstractive)] {
            writeln!(f, "{:<12} {:>8.4} {:>8.4} {:>6}", name, s.f1_at_k, s.f1_at_m, s.evaluated)?;
        }
        write!(
            f,
            "alpha-nDCG@{k} (alpha={}): {:.4} over {} documents",
            self.alpha, self.alpha_ndcg, self.alpha_ndcg_evaluated
        )
    }
}
