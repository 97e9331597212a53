//! TREC run (`qid Q0 docid rank score tag`) and qrels (`qid 0 docid grade`)
//! files. Fields are single-space separated on output; any whitespace on input.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::Path;

use aggretriever_core::eval::{validate_ranking, Qrels, Run};
use aggretriever_core::index::Hit;

use crate::error::{read_text, write_file, Error, FormatError, Result};

fn line_err(format: &'static str, line: usize, detail: impl Into<String>) -> FormatError {
    FormatError::Line {
        format,
        line,
        detail: detail.into(),
    }
}

fn push_line(out: &mut String, qid: &str, doc: &str, rank: usize, score: impl Display, tag: &str) {
    let _ = writeln!(out, "{qid} Q0 {doc} {rank} {score} {tag}");
}

/// Appends one query's ranked hits. Ranks start at 1; scores print in their
/// shortest round-tripping form.
pub fn push_hits(out: &mut String, qid: &str, hits: &[Hit], tag: &str) {
    for (i, h) in hits.iter().enumerate() {
        push_line(out, qid, &h.id, i + 1, h.score, tag);
    }
}

pub fn emit_run(run: &Run, tag: &str) -> String {
    let mut out = String::new();
    for (qid, list) in run {
        for (i, (doc, score)) in list.iter().enumerate() {
            push_line(&mut out, qid, doc, i + 1, score, tag);
        }
    }
    out
}

fn check_token(format: &'static str, line: usize, what: &str, s: &str) -> std::result::Result<(), FormatError> {
    if s.is_empty() || s.chars().any(char::is_whitespace) {
        return Err(line_err(format, line, format!("{what} must be a non-empty token without whitespace")));
    }
    Ok(())
}

/// Parses a run, orders each query by rank and checks that scores do not
/// increase down the list and that no document repeats.
pub fn parse_run(text: &str) -> std::result::Result<Run, FormatError> {
    const F: &str = "run file";
    let mut ranked: BTreeMap<String, Vec<(u64, String, f64, usize)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 6 {
            return Err(line_err(F, n, format!("expected 6 columns, found {}", cols.len())));
        }
        let rank: u64 = cols[3].parse().map_err(|_| line_err(F, n, format!("bad rank `{}`", cols[3])))?;
        let score: f64 = cols[4].parse().map_err(|_| line_err(F, n, format!("bad score `{}`", cols[4])))?;
        if !score.is_finite() {
            return Err(line_err(F, n, "score is not finite"));
        }
        ranked
            .entry(cols[0].to_string())
            .or_default()
            .push((rank, cols[2].to_string(), score, n));
    }
    let mut run = Run::new();
    for (qid, mut rows) in ranked {
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(line_err(F, w[1].3, format!("rank {} repeats for query `{qid}`", w[1].0)));
        }
        let list: Vec<(String, f64)> = rows.into_iter().map(|(_, d, s, _)| (d, s)).collect();
        validate_ranking(&qid, &list).map_err(|e| FormatError::Invalid {
            format: F,
            detail: e.to_string(),
        })?;
        run.insert(qid, list);
    }
    Ok(run)
}

pub fn read_run(path: &Path) -> Result<Run> {
    parse_run(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_run(run: &Run, tag: &str, path: &Path) -> Result<()> {
    write_file(path, emit_run(run, tag).as_bytes())
}

/// Negative grades (used by some collections for junk documents) count as 0.
pub fn parse_qrels(text: &str) -> std::result::Result<Qrels, FormatError> {
    const F: &str = "qrels file";
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 4 {
            return Err(line_err(F, n, format!("expected 4 columns, found {}", cols.len())));
        }
        let grade: i64 = cols[3].parse().map_err(|_| line_err(F, n, format!("bad grade `{}`", cols[3])))?;
        let grade = u32::try_from(grade.max(0)).map_err(|_| line_err(F, n, "grade out of range"))?;
        let docs = qrels.entry(cols[0].to_string()).or_default();
        if docs.insert(cols[2].to_string(), grade).is_some() {
            return Err(line_err(F, n, format!("document `{}` judged twice for query `{}`", cols[2], cols[0])));
        }
    }
    Ok(qrels)
}

pub fn emit_qrels(qrels: &Qrels) -> String {
    let mut out = String::new();
    for (qid, docs) in qrels {
        for (doc, grade) in docs {
            let _ = writeln!(out, "{qid} 0 {doc} {grade}");
        }
    }
    out
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    parse_qrels(&read_text(path)?).map_err(|e| Error::format(path, e))
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    for (qid, docs) in qrels {
        check_token("qrels file", 0, "query id", qid).map_err(|e| Error::format(path, e))?;
        for doc in docs.keys() {
            check_token("qrels file", 0, "document id", doc).map_err(|e| Error::format(path, e))?;
        }
    }
    write_file(path, emit_qrels(qrels).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_round_trip_is_byte_exact() {
        let mut text = String::new();
        let hits = vec![
            Hit {
                id: "d3".into(),
                score: 0.1,
            },
            Hit {
                id: "d1".into(),
                score: -1.5e-7,
            },
        ];
        push_hits(&mut text, "q1", &hits, "agg");
        push_hits(&mut text, "q2", &hits[1..], "agg");
        assert!(text.starts_with("q1 Q0 d3 1 0.1 agg\n"));
        let run = parse_run(&text).unwrap();
        assert_eq!(emit_run(&run, "agg"), text);
    }

    #[test]
    fn run_sorted_by_rank_and_validated() {
        let run = parse_run("q 0 b 2 1.0 t\nq Q0 a 1 2.0 t\n").unwrap();
        assert_eq!(run["q"][0].0, "a");
        assert!(parse_run("q Q0 a 1 1.0 t\nq Q0 b 2 2.0 t\n").is_err());
        assert!(parse_run("q Q0 a 1 1.0 t\nq Q0 a 2 0.5 t\n").is_err());
        assert!(parse_run("q Q0 a 1 1.0 t\nq Q0 b 1 0.5 t\n").is_err());
        assert!(parse_run("q Q0 a 1 NaN t\n").is_err());
        assert!(matches!(parse_run("q Q0 a 1\n"), Err(FormatError::Line { line: 1, .. })));
    }

    #[test]
    fn qrels_round_trip() {
        let text = "q1 0 a 1\nq1 0 b 3\nq2 0 c 0\n";
        let q = parse_qrels(text).unwrap();
        assert_eq!(q["q1"]["b"], 3);
        assert_eq!(emit_qrels(&q), text);
        assert_eq!(parse_qrels("q 0 a -2\n").unwrap()["q"]["a"], 0);
        assert!(parse_qrels("q 0 a 1\nq 0 a 2\n").is_err());
        assert!(parse_qrels("q 0 a x\n").is_err());
    }
}
