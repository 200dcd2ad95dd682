//! JSON-lines dataset files and plain-text prediction files.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub title: String,
    pub abstract_text: String,
    pub keyphrases: Vec<String>,
}

impl Sample {
    pub fn new(title: &str, abstract_text: &str, keyphrases: &[&str]) -> Self {
        Self {
            title: title.to_string(),
            abstract_text: abstract_text.to_string(),
            keyphrases: keyphrases.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Records without usable title, abstract or keyphrases are dropped.
    Train,
    /// Every record is kept so line positions stay aligned.
    Test,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Records skipped in train mode.
    pub dropped: usize,
}

/// Splits a `;`-separated keyphrase string, trimming and dropping empties.
pub fn split_keyphrases(field: &str) -> Vec<String> {
    field
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn string_field(obj: &serde_json::Map<String, Value>, field: &str, line: usize) -> Result<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(Error::Schema {
            line,
            field: field.to_string(),
        }),
    }
}

/// Parses dataset text; `line` numbers in errors are 1-based.
pub fn parse_dataset(text: &str, mode: Mode) -> Result<Dataset> {
    let mut out = Dataset::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(Error::Parse {
                line,
                message: "expected a JSON object".into(),
            });
        };
        let title = string_field(&obj, "title", line)?;
        let abstract_text = string_field(&obj, "abstract", line)?;
        let keyword = string_field(&obj, "keyword", line)?;
        let keyphrases = split_keyphrases(&keyword);

        let incomplete =
            title.trim().is_empty() || abstract_text.trim().is_empty() || keyphrases.is_empty();
        if mode == Mode::Train && incomplete {
            out.dropped += 1;
            continue;
        }
        out.samples.push(Sample {
            title,
            abstract_text,
            keyphrases,
        });
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>, mode: Mode) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, mode)
}

/// One JSON line in the dataset format.
pub fn sample_to_json_line(sample: &Sample) -> String {
    let obj = serde_json::json!({
        "title": sample.title,
        "abstract": sample.abstract_text,
        "keyword": sample.keyphrases.join(";"),
    });
    obj.to_string()
}

/// Prediction line: phrases separated by `;`, tokens by single spaces.
pub fn format_prediction_line(phrases: &[Vec<String>]) -> String {
    phrases
        .iter()
        .map(|p| p.join(" "))
        .collect::<Vec<_>>()
        .join(";")
}

/// Reads a prediction file: one line per document, possibly empty.
pub fn parse_predictions(text: &str) -> Vec<Vec<String>> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if text.ends_with('\n') {
        lines.pop();
    }
    if text.is_empty() {
        lines.clear();
    }
    lines
        .into_iter()
        .map(|l| split_keyphrases(l.trim_end_matches('\r')))
        .collect()
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_predictions(&text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_record() {
        let d = parse_dataset(r#"{"title":"T","abstract":"A","keyword":"a;b c"}"#, Mode::Train)
            .unwrap();
        assert_eq!(d.samples, vec![Sample::new("T", "A", &["a", "b c"])]);
    }

    #[test]
    fn empty_keyword_dropped_in_train_kept_in_test() {
        let text = "{\"title\":\"T\",\"abstract\":\"A\",\"keyword\":\"\"}\n\
                    {\"title\":\"U\",\"abstract\":\"B\",\"keyword\":\" x ; ;y\"}\n";
        let train = parse_dataset(text, Mode::Train).unwrap();
        assert_eq!(train.samples.len(), 1);
        assert_eq!(train.dropped, 1);
        assert_eq!(train.samples[0].keyphrases, ["x", "y"]);
        let test = parse_dataset(text, Mode::Test).unwrap();
        assert_eq!(test.samples.len(), 2);
        assert_eq!(test.dropped, 0);
    }

    #[test]
    fn truncated_json_reports_line() {
        let mut text = String::new();
        for _ in 0..16 {
            text.push_str("{\"title\":\"T\",\"abstract\":\"A\",\"keyword\":\"k\"}\n");
        }
        text.push_str("{\"title\":\"T\",\"abstr");
        let err = parse_dataset(&text, Mode::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 17, .. }));
        assert!(err.to_string().contains("line 17"));
    }

    #[test]
    fn missing_field_names_it() {
        let err = parse_dataset(r#"{"title":"T","keyword":"k"}"#, Mode::Train).unwrap_err();
        match err {
            Error::Schema { line, field } => {
                assert_eq!(line, 1);
                assert_eq!(field, "abstract");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prediction_lines_keep_positions() {
        let preds = parse_predictions("a b;c\n\nd\n");
        assert_eq!(preds.len(), 3);
        assert!(preds[1].is_empty());
        assert_eq!(preds[0], ["a b", "c"]);
        let line = format_prediction_line(&[vec!["a".into(), "b".into()], vec!["c".into()]]);
        assert_eq!(line, "a b;c");
    }
}
