//! Synthetic lexical-overlap retrieval task.
//!
//! Documents are uniform random token sequences. Each query is a handful of
//! distinct tokens copied from one source document, which is its only
//! relevant document. Hard negatives are the other documents sharing the most
//! query tokens.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::eval::Qrels;
use crate::rng::Xorshift64Star;
use crate::training::{TrainDataset, TrainExample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub docs: usize,
    pub queries: usize,
    pub vocab: usize,
    pub doc_len: usize,
    pub query_len: usize,
    pub negatives: usize,
    /// Share of queries withheld from training.
    pub held_out: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            docs: 256,
            queries: 64,
            vocab: 128,
            doc_len: 24,
            query_len: 5,
            negatives: 7,
            held_out: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthQuery {
    pub id: String,
    pub tokens: Vec<u32>,
    /// Index of the source document.
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub doc_ids: Vec<String>,
    pub docs: Vec<Vec<u32>>,
    pub queries: Vec<SynthQuery>,
    /// Query indices used for training, ascending.
    pub train: Vec<usize>,
    /// Withheld query indices, ascending.
    pub held_out: Vec<usize>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthTask> {
    if cfg.docs < 2 || cfg.queries == 0 || cfg.vocab == 0 {
        return Err(Error::invalid("synthetic task needs at least two docs, one query and a vocabulary"));
    }
    if cfg.query_len == 0 || cfg.query_len > cfg.doc_len {
        return Err(Error::invalid("query length must lie in 1..=doc_len"));
    }
    if cfg.negatives >= cfg.docs {
        return Err(Error::invalid("more negatives requested than other documents"));
    }
    if !(0.0..1.0).contains(&cfg.held_out) {
        return Err(Error::invalid("held-out share must lie in [0, 1)"));
    }
    let mut rng = Xorshift64Star::derived(cfg.seed, 0x7379_6e74);
    let vocab = cfg.vocab as u64;

    let mut docs = Vec::with_capacity(cfg.docs);
    while docs.len() < cfg.docs {
        let doc: Vec<u32> = (0..cfg.doc_len).map(|_| rng.below(vocab) as u32).collect();
        let mut distinct = doc.clone();
        distinct.sort_unstable();
        distinct.dedup();
        // every document must be able to source a query
        if distinct.len() >= cfg.query_len {
            docs.push(doc);
        }
    }
    let doc_sets: Vec<Vec<u32>> = docs
        .iter()
        .map(|d| {
            let mut s = d.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();

    let mut queries = Vec::with_capacity(cfg.queries);
    for qi in 0..cfg.queries {
        let positive = rng.below(cfg.docs as u64) as usize;
        let mut pool = doc_sets[positive].clone();
        rng.shuffle(&mut pool);
        let tokens: Vec<u32> = pool[..cfg.query_len].to_vec();
        let mut scored: Vec<(usize, usize)> = doc_sets
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != positive)
            .map(|(i, set)| (i, tokens.iter().filter(|t| set.binary_search(t).is_ok()).count()))
            .collect();
        scored.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let negatives = scored.iter().take(cfg.negatives).map(|&(i, _)| i).collect();
        queries.push(SynthQuery {
            id: format!("q{qi}"),
            tokens,
            positive,
            negatives,
        });
    }

    let mut order: Vec<usize> = (0..cfg.queries).collect();
    rng.shuffle(&mut order);
    let n_held = libm::round(cfg.held_out * cfg.queries as f64) as usize;
    let mut held_out = order[..n_held].to_vec();
    let mut train = order[n_held..].to_vec();
    held_out.sort_unstable();
    train.sort_unstable();

    Ok(SynthTask {
        doc_ids: (0..cfg.docs).map(|i| format!("d{i}")).collect(),
        docs,
        queries,
        train,
        held_out,
    })
}

impl SynthTask {
    /// Relevance judgments (grade 1 for the source document) for the given
    /// query indices.
    pub fn qrels_for(&self, which: &[usize]) -> Qrels {
        which
            .iter()
            .map(|&q| {
                let query = &self.queries[q];
                let mut judged = BTreeMap::new();
                judged.insert(self.doc_ids[query.positive].clone(), 1);
                (query.id.clone(), judged)
            })
            .collect()
    }

    pub fn qrels(&self) -> Qrels {
        self.qrels_for(&(0..self.queries.len()).collect::<Vec<_>>())
    }

    /// Training set over the training queries.
    pub fn train_dataset(&self) -> TrainDataset {
        TrainDataset {
            corpus: self.docs.clone(),
            examples: self
                .train
                .iter()
                .map(|&q| {
                    let query = &self.queries[q];
                    TrainExample {
                        query: query.tokens.clone(),
                        positive: query.positive,
                        negatives: query.negatives.clone(),
                    }
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let cfg = SynthConfig::default();
        let t = generate(&cfg).unwrap();
        assert_eq!(t, generate(&cfg).unwrap());
        assert_ne!(t, generate(&SynthConfig { seed: 1, ..cfg }).unwrap());
        assert_eq!(t.docs.len(), 256);
        assert_eq!(t.doc_ids[5], "d5");
        assert_eq!(t.queries.len(), 64);
        assert_eq!((t.train.len(), t.held_out.len()), (48, 16));
        let mut all: Vec<usize> = t.train.iter().chain(&t.held_out).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..64).collect::<Vec<_>>());
        assert_eq!(t.train_dataset().examples.len(), 48);
        assert_eq!(t.qrels().len(), 64);
    }

    #[test]
    fn queries_overlap_their_source() {
        let t = generate(&SynthConfig::default()).unwrap();
        for q in &t.queries {
            assert_eq!(q.tokens.len(), 5);
            let mut distinct = q.tokens.clone();
            distinct.sort_unstable();
            distinct.dedup();
            assert_eq!(distinct.len(), 5);
            assert!(q.tokens.iter().all(|tok| t.docs[q.positive].contains(tok)));
            assert_eq!(q.negatives.len(), 7);
            assert!(!q.negatives.contains(&q.positive));
            let overlap = |d: usize| q.tokens.iter().filter(|tok| t.docs[d].contains(tok)).count();
            // negatives are the most overlapping other documents
            let weakest = q.negatives.iter().map(|&d| overlap(d)).min().unwrap();
            for d in 0..t.docs.len() {
                if d != q.positive && !q.negatives.contains(&d) {
                    assert!(overlap(d) <= weakest);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let base = SynthConfig::default();
        assert!(generate(&SynthConfig { query_len: 30, ..base }).is_err());
        assert!(generate(&SynthConfig { negatives: 256, ..base }).is_err());
        assert!(generate(&SynthConfig { held_out: 1.0, ..base }).is_err());
        assert!(generate(&SynthConfig { docs: 1, ..base }).is_err());
    }
}
