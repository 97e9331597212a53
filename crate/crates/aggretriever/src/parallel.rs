//! Worker pools for encoding, search and analysis. Every driver collects
//! results in input order, so output does not depend on the thread count.

use aggretriever_core::analysis::{pair_errors, rows_for, sparse_ensemble, ApproxConfig, ApproxRow, ApproxSamples};
use aggretriever_core::encoder::{encode, ConcatEmbedding, EncoderConfig, EncoderHeads};
use aggretriever_core::index::{FlatIndex, Hit};
use aggretriever_core::pruning::{make_partition, SlicePartition};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formats::DumpRecord;

pub const THREADS_ENV: &str = "AGG_THREADS";

/// Flag value, else `AGG_THREADS`, else available parallelism.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{THREADS_ENV}={s:?} is not a thread count")))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    if n == 0 {
        return Err(Error::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

pub fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))
}

/// Encodes every record, truncated to `max_len` tokens.
pub fn encode_all(
    pool: &rayon::ThreadPool,
    records: &[DumpRecord],
    heads: &EncoderHeads,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
    max_len: usize,
) -> Result<Vec<(String, ConcatEmbedding)>> {
    pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let ctx = || format!("document `{}`", r.id);
                let seq = r.to_sequence_truncated(max_len).map_err(|e| Error::invalid(ctx(), e))?;
                let e = encode(&seq, heads, part, cfg).map_err(|e| Error::invalid(ctx(), e))?;
                Ok((r.id.clone(), e))
            })
            .collect()
    })
}

/// Top-`k` for each query.
pub fn search_all(
    pool: &rayon::ThreadPool,
    index: &FlatIndex,
    queries: &[(String, ConcatEmbedding)],
    k: usize,
) -> Result<Vec<Vec<Hit>>> {
    pool.install(|| {
        queries
            .par_iter()
            .map(|(id, q)| index.search(q, k).map_err(|e| Error::invalid(format!("query `{id}`"), e)))
            .collect()
    })
}

/// One query scanned in `chunks` row ranges and merged.
pub fn search_split(pool: &rayon::ThreadPool, index: &FlatIndex, query: &[f32], k: usize, chunks: usize) -> Result<Vec<Hit>> {
    if k == 0 {
        return Err(Error::Usage("k must be at least one".into()));
    }
    let n = index.len();
    let step = n.div_ceil(chunks.max(1)).max(1);
    let parts = pool.install(|| {
        (0..n.div_ceil(step))
            .into_par_iter()
            .map(|c| index.top_k_rows(query, k, c * step..((c + 1) * step).min(n)))
            .collect::<aggretriever_core::Result<Vec<_>>>()
    })?;
    Ok(index.merge(parts, k))
}

/// Same table as the sequential `approx_error`, fanned out over
/// `(d, partition seed)` jobs.
pub fn approx_error(pool: &rayon::ThreadPool, cfg: &ApproxConfig) -> Result<Vec<ApproxRow>> {
    cfg.validate()?;
    let pairs = sparse_ensemble(cfg.vocab_size, &cfg.ensemble)?;
    let jobs: Vec<(usize, u64)> = cfg
        .d_values
        .iter()
        .flat_map(|&d| cfg.partition_seeds().map(move |s| (d, s)))
        .collect();
    let errs = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, seed)| pair_errors(&pairs, &make_partition(cfg.vocab_size, d, seed)?))
            .collect::<aggretriever_core::Result<Vec<_>>>()
    })?;
    let seed_set = cfg.seed_set();
    let mut errs = errs.into_iter();
    let mut rows = Vec::new();
    for &d in &cfg.d_values {
        let parts = errs.by_ref().take(cfg.partitions).collect();
        rows.extend(rows_for(&ApproxSamples::from_partitions(d, parts), &seed_set));
    }
    Ok(rows)
}
