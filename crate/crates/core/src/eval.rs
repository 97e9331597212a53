//! Ranking metrics over judged runs.
//!
//! Averages are macro-averages over queries present in both the run and the
//! qrels. Queries present in only one of them are dropped and counted in
//! [`MetricValue`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::{Error, Result};

/// query id → (doc id → grade).
pub type Qrels = BTreeMap<String, BTreeMap<String, u32>>;
/// query id → ranked `(doc id, score)` list, best first.
pub type Run = BTreeMap<String, Vec<(String, f64)>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Gain {
    /// `2^grade - 1`
    #[default]
    Exponential,
    /// `grade`
    Linear,
}

impl Gain {
    pub fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Exponential => libm::exp2(f64::from(grade)) - 1.0,
            Gain::Linear => f64::from(grade),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    ReciprocalRank,
    Recall,
    Ndcg,
    Hit,
}

/// A metric with its cutoff, e.g. `ndcg@10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Metric {
    pub kind: MetricKind,
    pub k: usize,
}

impl Metric {
    pub fn new(kind: MetricKind, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("metric cutoff must be at least one"));
        }
        Ok(Self { kind, k })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            MetricKind::ReciprocalRank => "rr",
            MetricKind::Recall => "recall",
            MetricKind::Ndcg => "ndcg",
            MetricKind::Hit => "hit",
        };
        write!(f, "{name}@{}", self.k)
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, k) = s
            .trim()
            .split_once('@')
            .ok_or_else(|| Error::invalid(alloc::format!("metric `{s}` has no @cutoff")))?;
        let kind = match name.to_ascii_lowercase().as_str() {
            "rr" | "mrr" => MetricKind::ReciprocalRank,
            "recall" | "r" => MetricKind::Recall,
            "ndcg" => MetricKind::Ndcg,
            "hit" => MetricKind::Hit,
            _ => return Err(Error::invalid(alloc::format!("unknown metric `{name}`"))),
        };
        let k = k
            .parse()
            .map_err(|_| Error::invalid(alloc::format!("bad cutoff in `{s}`")))?;
        Metric::new(kind, k)
    }
}

/// Aggregated metric plus bookkeeping on which queries contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub metric: Metric,
    pub value: f64,
    /// Queries averaged over.
    pub queries: usize,
    /// Run queries without judgments.
    pub missing_from_qrels: usize,
    /// Judged queries without a ranking.
    pub missing_from_run: usize,
    /// Judged queries the metric is undefined for (recall with no relevant docs).
    pub skipped: usize,
}

fn relevant(judged: &BTreeMap<String, u32>, doc: &str) -> bool {
    judged.get(doc).is_some_and(|&g| g > 0)
}

/// Reciprocal rank of the first relevant document within `cutoff`.
pub fn query_reciprocal_rank(ranked: &[&str], judged: &BTreeMap<String, u32>, cutoff: usize) -> f64 {
    ranked
        .iter()
        .take(cutoff)
        .position(|d| relevant(judged, d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Fraction of relevant documents found within the top `k`; `None` when the
/// query has no relevant documents.
pub fn query_recall(ranked: &[&str], judged: &BTreeMap<String, u32>, k: usize) -> Option<f64> {
    let total = judged.values().filter(|&&g| g > 0).count();
    if total == 0 {
        return None;
    }
    let found = ranked.iter().take(k).filter(|d| relevant(judged, d)).count();
    Some(found as f64 / total as f64)
}

/// nDCG at `k` with discount `1/log2(rank + 1)`. Zero when no judged
/// document has positive gain.
pub fn query_ndcg(ranked: &[&str], judged: &BTreeMap<String, u32>, k: usize, gain: Gain) -> f64 {
    let discount = |i: usize| 1.0 / libm::log2(i as f64 + 2.0);
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| gain.apply(judged.get(*d).copied().unwrap_or(0)) * discount(i))
        .sum();
    let mut grades: Vec<u32> = judged.values().copied().collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let ideal: f64 = grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain.apply(g) * discount(i))
        .sum();
    if ideal > 0.0 {
        dcg / ideal
    } else {
        0.0
    }
}

/// 1 if any relevant document is within the top `k`.
pub fn query_hit(ranked: &[&str], judged: &BTreeMap<String, u32>, k: usize) -> f64 {
    if ranked.iter().take(k).any(|d| relevant(judged, d)) {
        1.0
    } else {
        0.0
    }
}

/// Per-query value of `metric`, or `None` if it is undefined for the query.
pub fn query_metric(ranked: &[&str], judged: &BTreeMap<String, u32>, metric: Metric, gain: Gain) -> Option<f64> {
    match metric.kind {
        MetricKind::ReciprocalRank => Some(query_reciprocal_rank(ranked, judged, metric.k)),
        MetricKind::Recall => query_recall(ranked, judged, metric.k),
        MetricKind::Ndcg => Some(query_ndcg(ranked, judged, metric.k, gain)),
        MetricKind::Hit => Some(query_hit(ranked, judged, metric.k)),
    }
}

/// Query ids shared by `run` and `qrels`, in ascending order.
pub fn judged_queries<'a>(run: &'a Run, qrels: &Qrels) -> Vec<&'a str> {
    run.keys().filter(|q| qrels.contains_key(*q)).map(String::as_str).collect()
}

/// Doc ids of one ranked list.
pub fn ranked_ids(list: &[(String, f64)]) -> Vec<&str> {
    list.iter().map(|(d, _)| d.as_str()).collect()
}

/// Folds per-query values, given in ascending query order, into a
/// [`MetricValue`]. Summation order is fixed, so the result does not depend on
/// how the per-query values were computed.
pub fn aggregate(metric: Metric, run: &Run, qrels: &Qrels, per_query: &[Option<f64>]) -> MetricValue {
    let mut sum = 0.0;
    let mut queries = 0;
    let mut skipped = 0;
    for v in per_query {
        match v {
            Some(v) => {
                sum += v;
                queries += 1;
            }
            None => skipped += 1,
        }
    }
    let missing_from_qrels = run.keys().filter(|q| !qrels.contains_key(*q)).count();
    let missing_from_run = qrels.keys().filter(|q| !run.contains_key(*q)).count();
    MetricValue {
        metric,
        value: if queries > 0 { sum / queries as f64 } else { 0.0 },
        queries,
        missing_from_qrels,
        missing_from_run,
        skipped,
    }
}

/// Evaluates one metric sequentially.
pub fn evaluate(run: &Run, qrels: &Qrels, metric: Metric, gain: Gain) -> MetricValue {
    let per_query: Vec<Option<f64>> = judged_queries(run, qrels)
        .into_iter()
        .map(|q| query_metric(&ranked_ids(&run[q]), &qrels[q], metric, gain))
        .collect();
    aggregate(metric, run, qrels, &per_query)
}

pub fn reciprocal_rank_at(run: &Run, qrels: &Qrels, cutoff: usize) -> Result<MetricValue> {
    Ok(evaluate(run, qrels, Metric::new(MetricKind::ReciprocalRank, cutoff)?, Gain::default()))
}

pub fn recall_at(run: &Run, qrels: &Qrels, k: usize) -> Result<MetricValue> {
    Ok(evaluate(run, qrels, Metric::new(MetricKind::Recall, k)?, Gain::default()))
}

pub fn ndcg_at(run: &Run, qrels: &Qrels, k: usize, gain: Gain) -> Result<MetricValue> {
    Ok(evaluate(run, qrels, Metric::new(MetricKind::Ndcg, k)?, gain))
}

/// Hit accuracy; `answers` marks answer-bearing documents with a positive grade.
pub fn hit_accuracy_at(run: &Run, answers: &Qrels, k: usize) -> Result<MetricValue> {
    Ok(evaluate(run, answers, Metric::new(MetricKind::Hit, k)?, Gain::default()))
}

/// Checks that a ranked list has unique doc ids and non-increasing scores.
pub fn validate_ranking(query: &str, list: &[(String, f64)]) -> Result<()> {
    let mut seen = alloc::collections::BTreeSet::new();
    for (i, (doc, score)) in list.iter().enumerate() {
        if !seen.insert(doc.as_str()) {
            return Err(Error::DuplicateId(alloc::format!("{query}/{doc}")));
        }
        if score.is_nan() {
            return Err(Error::NonFinite("run score"));
        }
        if i > 0 && *score > list[i - 1].1 {
            return Err(Error::invalid(alloc::format!(
                "scores for query `{query}` increase at rank {}",
                i + 1
            )));
        }
    }
    Ok(())
}
