//! Exact inner-product search over concatenated embeddings.
//!
//! Vectors are stored in single precision; every score is a sequential
//! double-precision sum of `f32 × f32` products rounded once to `f32`, so a
//! score is reproducible bit for bit. Results are ordered by descending
//! score, then ascending id.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::encoder::ConcatEmbedding;
use crate::linalg::dot_f32;
pub use crate::pruning::Fingerprint;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub id: String,
    pub score: f32,
}

/// Immutable flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    fingerprint: Fingerprint,
}

#[derive(Clone, Copy)]
struct Candidate<'a> {
    score: f32,
    id: &'a str,
    row: usize,
}

impl Candidate<'_> {
    /// `Less` means `self` ranks ahead of `other`.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        // scores are finite, and -0.0 must tie with 0.0
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.id.cmp(other.id))
    }
}

// Heap order: the worst retained candidate sits on top.
impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

/// Score of `query` against a stored row.
#[inline]
pub fn score(query: &[f32], row: &[f32]) -> f32 {
    dot_f32(query, row) as f32
}

impl FlatIndex {
    /// Builds an index from `(id, embedding)` pairs. Every embedding must have
    /// the same dimension and partition fingerprint.
    pub fn build(embeddings: Vec<(String, ConcatEmbedding)>) -> Result<Self> {
        let mut it = embeddings.into_iter().peekable();
        let (dim, fingerprint) = match it.peek() {
            Some((_, e)) => (e.dim(), e.fingerprint),
            None => (0, Fingerprint::NONE),
        };
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, e) in it {
            Error::check_dim("embedding dimension", dim, e.dim())?;
            if e.fingerprint != fingerprint {
                return Err(Error::PartitionMismatch);
            }
            ids.push(id);
            data.extend_from_slice(&e.cls_part);
            data.extend_from_slice(&e.agg_part);
        }
        Self::from_raw(dim, ids, data, fingerprint)
    }

    /// Builds an index from a flat row-major buffer.
    pub fn from_raw(dim: usize, ids: Vec<String>, data: Vec<f32>, fingerprint: Fingerprint) -> Result<Self> {
        Error::check_dim("index data length", ids.len() * dim, data.len())?;
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("index vectors"));
        }
        Ok(Self {
            dim,
            ids,
            data,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Top-`k` search for an encoded query. Refuses queries encoded with a
    /// different partition.
    pub fn search(&self, query: &ConcatEmbedding, k: usize) -> Result<Vec<Hit>> {
        if query.fingerprint != self.fingerprint {
            return Err(Error::PartitionMismatch);
        }
        self.search_raw(&query.to_vec(), k)
    }

    /// Top-`k` search for a raw vector.
    pub fn search_raw(&self, query: &[f32], k: usize) -> Result<Vec<Hit>> {
        let part = self.top_k_rows(query, k, 0..self.len())?;
        Ok(self.hits(part))
    }

    /// Top-`k` `(row, score)` pairs among `rows`, best first. Building block
    /// for partitioned scans; merge partial results with [`FlatIndex::merge`].
    pub fn top_k_rows(&self, query: &[f32], k: usize, rows: Range<usize>) -> Result<Vec<(usize, f32)>> {
        Error::check_dim("query dimension", self.dim, query.len())?;
        if k == 0 {
            return Err(Error::invalid("k must be at least one"));
        }
        if query.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("query vector"));
        }
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k.min(rows.len()) + 1);
        for row in rows {
            let c = Candidate {
                score: score(query, self.vector(row)),
                id: &self.ids[row],
                row,
            };
            if heap.len() < k {
                heap.push(c);
            } else if let Some(worst) = heap.peek() {
                if c.rank_cmp(worst) == Ordering::Less {
                    heap.pop();
                    heap.push(c);
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.row, c.score))
            .collect())
    }

    /// Merges partial top-`k` lists (from disjoint row ranges) into one.
    pub fn merge(&self, parts: Vec<Vec<(usize, f32)>>, k: usize) -> Vec<Hit> {
        let mut all: Vec<Candidate<'_>> = parts
            .into_iter()
            .flatten()
            .map(|(row, score)| Candidate {
                score,
                id: &self.ids[row],
                row,
            })
            .collect();
        all.sort_unstable_by(Candidate::rank_cmp);
        all.truncate(k);
        self.hits(all.into_iter().map(|c| (c.row, c.score)).collect())
    }

    fn hits(&self, rows: Vec<(usize, f32)>) -> Vec<Hit> {
        rows.into_iter()
            .map(|(row, score)| Hit {
                id: self.ids[row].clone(),
                score,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn emb(v: &[f32]) -> ConcatEmbedding {
        ConcatEmbedding::new(Vec::new(), v.to_vec(), Fingerprint::NONE).unwrap()
    }

    fn abc() -> FlatIndex {
        FlatIndex::build(vec![
            ("a".to_string(), emb(&[1.0, 0.0])),
            ("b".to_string(), emb(&[0.0, 1.0])),
            ("c".to_string(), emb(&[1.0, 1.0])),
        ])
        .unwrap()
    }

    #[test]
    fn worked_example() {
        let idx = abc();
        assert_eq!(idx.len(), 3);
        let hits = idx.search(&emb(&[1.0, 0.1]), 2).unwrap();
        assert_eq!(hits[0].id, "c");
        assert_eq!(hits[0].score, (1.0f64 + 0.1f32 as f64) as f32);
        assert_eq!(hits[1], Hit { id: "a".into(), score: 1.0 });
    }

    #[test]
    fn k_larger_than_count_and_zero_query() {
        let idx = abc();
        assert_eq!(idx.search(&emb(&[1.0, 0.1]), 10).unwrap().len(), 3);
        let ids: Vec<_> = idx
            .search(&emb(&[0.0, 0.0]), 3)
            .unwrap()
            .into_iter()
            .map(|h| (h.id, h.score))
            .collect();
        assert_eq!(ids, vec![("a".into(), 0.0), ("b".into(), 0.0), ("c".into(), 0.0)]);
    }

    #[test]
    fn empty_index() {
        let idx = FlatIndex::build(Vec::new()).unwrap();
        assert!(idx.is_empty());
        assert!(idx.search_raw(&[], 5).unwrap().is_empty());
    }

    #[test]
    fn build_errors() {
        let dup = FlatIndex::build(vec![("a".into(), emb(&[1.0])), ("a".into(), emb(&[2.0]))]);
        assert_eq!(dup, Err(Error::DuplicateId("a".into())));
        let dim = FlatIndex::build(vec![("a".into(), emb(&[1.0])), ("b".into(), emb(&[2.0, 1.0]))]);
        assert!(matches!(dim, Err(Error::DimensionMismatch { .. })));
        let idx = abc();
        assert!(idx.search(&emb(&[1.0]), 1).is_err());
        assert!(idx.search(&emb(&[1.0, 0.0]), 0).is_err());
    }

    #[test]
    fn fingerprint_is_enforced() {
        let fp = Fingerprint([7; 32]);
        let e = ConcatEmbedding::new(vec![], vec![1.0], fp).unwrap();
        let idx = FlatIndex::build(vec![("a".into(), e.clone())]).unwrap();
        assert_eq!(idx.fingerprint(), fp);
        assert!(idx.search(&e, 1).is_ok());
        assert_eq!(idx.search(&emb(&[1.0]), 1), Err(Error::PartitionMismatch));
        let mixed = FlatIndex::build(vec![("a".into(), e), ("b".into(), emb(&[1.0]))]);
        assert_eq!(mixed, Err(Error::PartitionMismatch));
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_prefixes(
            rows in prop::collection::vec(prop::collection::vec(-4i8..4, 3), 1..40),
            q in prop::collection::vec(-4i8..4, 3),
            k in 1usize..50,
            split in 0usize..40,
        ) {
            // small integers force plenty of score ties
            let ids: Vec<String> = (0..rows.len()).map(|i| alloc::format!("d{:03}", (i * 7) % 1000)).collect();
            let data: Vec<f32> = rows.iter().flatten().map(|&x| f32::from(x)).collect();
            let idx = FlatIndex::from_raw(3, ids.clone(), data, Fingerprint::NONE).unwrap();
            let qf: Vec<f32> = q.iter().map(|&x| f32::from(x)).collect();

            let mut brute: Vec<(f32, String)> = rows.iter().zip(&ids).map(|(r, id)| {
                let s: f64 = r.iter().zip(&q).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
                (s as f32, id.clone())
            }).collect();
            brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1)));

            let all = idx.search_raw(&qf, rows.len()).unwrap();
            let got: Vec<(f32, String)> = all.iter().map(|h| (h.score, h.id.clone())).collect();
            prop_assert_eq!(&got, &brute);

            let top = idx.search_raw(&qf, k).unwrap();
            prop_assert_eq!(&top[..], &all[..k.min(all.len())]);

            let cut = split.min(rows.len());
            let parts = vec![
                idx.top_k_rows(&qf, k, 0..cut).unwrap(),
                idx.top_k_rows(&qf, k, cut..rows.len()).unwrap(),
            ];
            prop_assert_eq!(idx.merge(parts, k), top);
        }
    }
}
