//! Line-delimited JSON: token-id corpora (`{"id", "token_ids"}`) and training
//! records (`{"query", "positive", "negatives"}`).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use aggretriever_core::training::{TrainDataset, TrainExample};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{read_text, write_file, Error, FormatError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub token_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub query: Vec<u32>,
    pub positive: String,
    pub negatives: Vec<String>,
}

fn parse_lines<T: DeserializeOwned>(format: &'static str, text: &str) -> std::result::Result<Vec<T>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| FormatError::Line {
            format,
            line: i + 1,
            detail: e.to_string(),
        })?);
    }
    Ok(out)
}

fn emit_lines<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for it in items {
        let _ = writeln!(s, "{}", serde_json::to_string(it).expect("plain data serializes"));
    }
    s
}

pub fn parse_corpus(text: &str) -> std::result::Result<Vec<CorpusRecord>, FormatError> {
    let recs: Vec<CorpusRecord> = parse_lines("corpus", text)?;
    let mut seen = HashMap::new();
    for (i, r) in recs.iter().enumerate() {
        if seen.insert(r.id.as_str(), i).is_some() {
            return Err(FormatError::DuplicateName {
                format: "corpus",
                name: r.id.clone(),
            });
        }
    }
    Ok(recs)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    parse_corpus(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_corpus(recs: &[CorpusRecord], path: &Path) -> Result<()> {
    write_file(path, emit_lines(recs).as_bytes())
}

pub fn parse_train(text: &str) -> std::result::Result<Vec<TrainRecord>, FormatError> {
    parse_lines("training data", text)
}

pub fn read_train(path: &Path) -> Result<Vec<TrainRecord>> {
    parse_train(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_train(recs: &[TrainRecord], path: &Path) -> Result<()> {
    write_file(path, emit_lines(recs).as_bytes())
}

/// Resolves document ids against `corpus`.
pub fn to_dataset(corpus: &[CorpusRecord], recs: &[TrainRecord]) -> std::result::Result<TrainDataset, FormatError> {
    let index: HashMap<&str, usize> = corpus.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let lookup = |line: usize, id: &str| {
        index.get(id).copied().ok_or_else(|| FormatError::Line {
            format: "training data",
            line,
            detail: format!("unknown document id `{id}`"),
        })
    };
    let mut examples = Vec::with_capacity(recs.len());
    for (i, r) in recs.iter().enumerate() {
        examples.push(TrainExample {
            query: r.query.clone(),
            positive: lookup(i + 1, &r.positive)?,
            negatives: r.negatives.iter().map(|n| lookup(i + 1, n)).collect::<std::result::Result<_, _>>()?,
        });
    }
    Ok(TrainDataset {
        corpus: corpus.iter().map(|r| r.token_ids.clone()).collect(),
        examples,
    })
}
