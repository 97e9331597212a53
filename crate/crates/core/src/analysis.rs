//! Approximation error of the pruned representations, and term misalignment.
//!
//! The ensemble is synthetic: each vector has `nonzeros` entries at uniform
//! random vocabulary ids with exponential(1) magnitudes, and the two vectors
//! of a pair share `shared` of their ids (with independent magnitudes).

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::lexrep::LexicalVector;
use crate::pruning::{
    make_partition, prune_semi, prune_sparse, sparse_dense_dot, sparse_hashed_projection, sparse_pooled_dot,
    SlicePartition, SliceWinner, SparseLexical,
};
use crate::rng::Xorshift64Star;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "d,pruner,mean_abs_err,stderr,seed_set";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pruner {
    /// Semi aggregation.
    AggPlus,
    /// Full aggregation.
    AggStar,
    /// Signed hashing projection onto the same slices.
    LinearRandom,
}

impl Pruner {
    pub const ALL: [Pruner; 3] = [Pruner::AggPlus, Pruner::AggStar, Pruner::LinearRandom];

    pub fn name(self) -> &'static str {
        match self {
            Pruner::AggPlus => "agg+",
            Pruner::AggStar => "agg*",
            Pruner::LinearRandom => "linear-random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub pairs: usize,
    pub nonzeros: usize,
    pub shared: usize,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            pairs: 1000,
            nonzeros: 64,
            shared: 16,
            seed: 0,
        }
    }
}

pub type Pair = (SparseLexical, SparseLexical);

fn draw_distinct(rng: &mut Xorshift64Star, vocab: usize, n: usize, taken: &mut BTreeSet<u32>) -> Vec<u32> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let id = rng.below(vocab as u64) as u32;
        if taken.insert(id) {
            out.push(id);
        }
    }
    out
}

fn with_magnitudes(rng: &mut Xorshift64Star, vocab: usize, mut ids: Vec<u32>) -> SparseLexical {
    ids.sort_unstable();
    let values = ids.iter().map(|_| rng.exponential()).collect();
    SparseLexical {
        vocab_size: vocab,
        indices: ids,
        values,
    }
}

/// Seeded ensemble of sparse lexical pairs.
pub fn sparse_ensemble(vocab_size: usize, cfg: &EnsembleConfig) -> Result<Vec<Pair>> {
    if cfg.shared > cfg.nonzeros {
        return Err(Error::invalid("shared terms exceed nonzeros"));
    }
    if 2 * cfg.nonzeros - cfg.shared > vocab_size {
        return Err(Error::invalid("ensemble vectors do not fit in the vocabulary"));
    }
    let mut rng = Xorshift64Star::derived(cfg.seed, 0x656e_7365);
    let mut pairs = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        let mut taken = BTreeSet::new();
        let shared = draw_distinct(&mut rng, vocab_size, cfg.shared, &mut taken);
        let own_q = draw_distinct(&mut rng, vocab_size, cfg.nonzeros - cfg.shared, &mut taken);
        let own_p = draw_distinct(&mut rng, vocab_size, cfg.nonzeros - cfg.shared, &mut taken);
        let q: Vec<u32> = shared.iter().chain(&own_q).copied().collect();
        let p: Vec<u32> = shared.iter().chain(&own_p).copied().collect();
        let q = with_magnitudes(&mut rng, vocab_size, q);
        let p = with_magnitudes(&mut rng, vocab_size, p);
        pairs.push((q, p));
    }
    Ok(pairs)
}

/// Signed errors `v_q·v_p − approx` of every pruner for every pair under one
/// partition, indexed like [`Pruner::ALL`].
pub fn pair_errors(pairs: &[Pair], part: &SlicePartition) -> Result<[Vec<f64>; 3]> {
    let mut out: [Vec<f64>; 3] = Default::default();
    for (q, p) in pairs {
        let exact = q.dot(p);
        let wq = prune_sparse(q, part)?;
        let wp = prune_sparse(p, part)?;
        out[0].push(exact - sparse_pooled_dot(&wq, &wp, false));
        out[1].push(exact - sparse_pooled_dot(&wq, &wp, true));
        let lin = sparse_dense_dot(&sparse_hashed_projection(q, part), &sparse_hashed_projection(p, part));
        out[2].push(exact - lin);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub vocab_size: usize,
    pub d_values: Vec<usize>,
    pub ensemble: EnsembleConfig,
    /// Partitions per `d`, seeded `partition_seed .. partition_seed + partitions`.
    pub partitions: usize,
    pub partition_seed: u64,
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if self.partitions == 0 {
            return Err(Error::invalid("need at least one partition per d"));
        }
        for &d in &self.d_values {
            if d == 0 || d > self.vocab_size {
                return Err(Error::invalid(alloc::format!(
                    "d = {d} outside 1..={}",
                    self.vocab_size
                )));
            }
        }
        Ok(())
    }

    pub fn partition_seeds(&self) -> core::ops::Range<u64> {
        self.partition_seed..self.partition_seed + self.partitions as u64
    }

    /// Label recorded in the `seed_set` column.
    pub fn seed_set(&self) -> String {
        alloc::format!(
            "e{}/p{}-{}",
            self.ensemble.seed,
            self.partition_seed,
            self.partition_seed + self.partitions as u64 - 1
        )
    }
}

/// Absolute errors for one `d`, pooled over every (partition, pair), in
/// partition-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSamples {
    pub d: usize,
    pub abs_errors: [Vec<f64>; 3],
}

impl ApproxSamples {
    /// Concatenates per-partition results given in seed order.
    pub fn from_partitions(d: usize, parts: Vec<[Vec<f64>; 3]>) -> Self {
        let mut abs_errors: [Vec<f64>; 3] = Default::default();
        for p in parts {
            for (acc, errs) in abs_errors.iter_mut().zip(p) {
                acc.extend(errs.into_iter().map(f64::abs));
            }
        }
        Self { d, abs_errors }
    }

    pub fn of(&self, pruner: Pruner) -> &[f64] {
        &self.abs_errors[pruner as usize]
    }
}

/// Sequential sample collection for one `d`.
pub fn approx_samples(pairs: &[Pair], cfg: &ApproxConfig, d: usize) -> Result<ApproxSamples> {
    let parts = cfg
        .partition_seeds()
        .map(|seed| pair_errors(pairs, &make_partition(cfg.vocab_size, d, seed)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ApproxSamples::from_partitions(d, parts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRow {
    pub d: usize,
    pub pruner: Pruner,
    pub mean_abs_err: f64,
    pub stderr: f64,
    pub seed_set: String,
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

pub fn rows_for(samples: &ApproxSamples, seed_set: &str) -> Vec<ApproxRow> {
    Pruner::ALL
        .iter()
        .map(|&pruner| {
            let (mean_abs_err, stderr) = mean_stderr(samples.of(pruner));
            ApproxRow {
                d: samples.d,
                pruner,
                mean_abs_err,
                stderr,
                seed_set: String::from(seed_set),
            }
        })
        .collect()
}

/// Mean absolute error table, one row per `(d, pruner)`.
pub fn approx_error(cfg: &ApproxConfig) -> Result<Vec<ApproxRow>> {
    cfg.validate()?;
    let pairs = sparse_ensemble(cfg.vocab_size, &cfg.ensemble)?;
    let seed_set = cfg.seed_set();
    let mut rows = Vec::new();
    for &d in &cfg.d_values {
        rows.extend(rows_for(&approx_samples(&pairs, cfg, d)?, &seed_set));
    }
    Ok(rows)
}

pub fn to_csv(rows: &[ApproxRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{}",
            r.d,
            r.pruner.name(),
            r.mean_abs_err,
            r.stderr,
            r.seed_set
        );
    }
    s
}

/// Lower percentile bound on the mean of `xs`, from `resamples` seeded
/// bootstrap resamples at one-sided `confidence`.
pub fn bootstrap_lower_bound(xs: &[f64], resamples: usize, confidence: f64, seed: u64) -> Result<f64> {
    if xs.is_empty() || resamples == 0 {
        return Err(Error::invalid("bootstrap needs samples and resamples"));
    }
    if !(0.0..1.0).contains(&confidence) {
        return Err(Error::invalid("confidence must lie in [0, 1)"));
    }
    let mut rng = Xorshift64Star::derived(seed, 0x626f_6f74);
    let n = xs.len() as u64;
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| xs[rng.below(n) as usize]).sum::<f64>() / n as f64)
        .collect();
    means.sort_unstable_by(f64::total_cmp);
    let idx = libm::floor((1.0 - confidence) * resamples as f64) as usize;
    Ok(means[idx.min(resamples - 1)])
}

/// Fraction of slices whose semi-aggregation winners differ.
pub fn misalignment_rate(v_q: &LexicalVector, v_p: &LexicalVector, part: &SlicePartition) -> Result<f64> {
    let s = sign_cancellation_stats(v_q, v_p, part)?;
    Ok((s.opposite + s.same) as f64 / part.d() as f64)
}

/// Per-slice classification of the winners of two vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CancellationStats {
    pub aligned: usize,
    /// Misaligned with opposite signs; full aggregation negates these products.
    pub opposite: usize,
    pub same: usize,
}

impl CancellationStats {
    pub fn misaligned(&self) -> usize {
        self.opposite + self.same
    }

    pub fn total(&self) -> usize {
        self.aligned + self.misaligned()
    }

    pub fn add(&mut self, o: &CancellationStats) {
        self.aligned += o.aligned;
        self.opposite += o.opposite;
        self.same += o.same;
    }

    /// Opposite-sign share of misaligned slices.
    pub fn opposite_fraction(&self) -> f64 {
        if self.misaligned() == 0 {
            0.0
        } else {
            self.opposite as f64 / self.misaligned() as f64
        }
    }

    fn record(&mut self, id_q: u32, id_p: u32, part: &SlicePartition) {
        if id_q == id_p {
            self.aligned += 1;
        } else if part.sign_of()[id_q as usize] != part.sign_of()[id_p as usize] {
            self.opposite += 1;
        } else {
            self.same += 1;
        }
    }
}

pub fn sign_cancellation_stats(
    v_q: &LexicalVector,
    v_p: &LexicalVector,
    part: &SlicePartition,
) -> Result<CancellationStats> {
    Error::check_dim("lexical vector sizes", v_q.vocab_size(), v_p.vocab_size())?;
    let (_, ids_q) = prune_semi(v_q, part)?;
    let (_, ids_p) = prune_semi(v_p, part)?;
    let mut s = CancellationStats::default();
    for (&a, &b) in ids_q.0.iter().zip(&ids_p.0) {
        s.record(a, b, part);
    }
    Ok(s)
}

/// Statistics from sparse winners. With `active_only`, only slices where both
/// vectors are nonzero count (the slices that contribute a product); otherwise
/// every slice counts, an empty slice's winner being its lowest id.
pub fn sparse_cancellation_stats(
    wq: &[SliceWinner],
    wp: &[SliceWinner],
    part: &SlicePartition,
    active_only: bool,
) -> CancellationStats {
    let mut s = CancellationStats::default();
    let (mut i, mut j) = (0, 0);
    for n in 0..part.d() as u32 {
        let a = wq.get(i).filter(|w| w.slice == n).map(|w| w.id);
        let b = wp.get(j).filter(|w| w.slice == n).map(|w| w.id);
        i += usize::from(a.is_some());
        j += usize::from(b.is_some());
        match (a, b) {
            (Some(a), Some(b)) => s.record(a, b, part),
            _ if active_only => {}
            (a, b) => {
                let lowest = part.slice(n as usize)[0];
                s.record(a.unwrap_or(lowest), b.unwrap_or(lowest), part);
            }
        }
    }
    s
}

/// Monte-Carlo cancellation counts over the ensemble and a range of random
/// partitions: `(all slices, active slices)`.
pub fn cancellation_monte_carlo(
    pairs: &[Pair],
    vocab_size: usize,
    d: usize,
    seeds: core::ops::Range<u64>,
) -> Result<(CancellationStats, CancellationStats)> {
    let mut all = CancellationStats::default();
    let mut active = CancellationStats::default();
    for seed in seeds {
        let part = make_partition(vocab_size, d, seed)?;
        for (q, p) in pairs {
            let wq = prune_sparse(q, &part)?;
            let wp = prune_sparse(p, &part)?;
            all.add(&sparse_cancellation_stats(&wq, &wp, &part, false));
            active.add(&sparse_cancellation_stats(&wq, &wp, &part, true));
        }
    }
    Ok((all, active))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pruning::{prune_full, SlicePartition};
    use alloc::vec;
    use proptest::prelude::*;

    fn small_cfg(d_values: Vec<usize>) -> ApproxConfig {
        ApproxConfig {
            vocab_size: 256,
            d_values,
            ensemble: EnsembleConfig {
                pairs: 50,
                nonzeros: 16,
                shared: 4,
                seed: 3,
            },
            partitions: 3,
            partition_seed: 10,
        }
    }

    #[test]
    fn ensemble_shape() {
        let pairs = sparse_ensemble(256, &small_cfg(vec![]).ensemble).unwrap();
        assert_eq!(pairs.len(), 50);
        for (q, p) in &pairs {
            assert_eq!(q.indices.len(), 16);
            assert!(q.indices.windows(2).all(|w| w[0] < w[1]));
            assert!(q.values.iter().all(|&x| x > 0.0));
            let shared = q.indices.iter().filter(|i| p.indices.contains(i)).count();
            assert_eq!(shared, 4);
        }
        let cfg = EnsembleConfig {
            nonzeros: 200,
            shared: 0,
            ..Default::default()
        };
        assert!(sparse_ensemble(256, &cfg).is_err());
    }

    #[test]
    fn identity_partition_has_zero_agg_error() {
        let rows = approx_error(&small_cfg(vec![256])).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].pruner, Pruner::AggPlus);
        // same products, summed in slice order rather than id order
        assert!(rows[0].mean_abs_err < 1e-12);
        assert!(rows[1].mean_abs_err < 1e-12);
        // singleton slices make the signed hash an exact embedding as well
        assert!(rows[2].mean_abs_err < 1e-12);
    }

    #[test]
    fn invalid_d() {
        assert!(approx_error(&small_cfg(vec![0])).is_err());
        assert!(approx_error(&small_cfg(vec![257])).is_err());
    }

    #[test]
    fn csv_is_deterministic() {
        let cfg = small_cfg(vec![16, 64]);
        let a = to_csv(&approx_error(&cfg).unwrap());
        let b = to_csv(&approx_error(&cfg).unwrap());
        assert_eq!(a, b);
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("16,agg+,"));
        assert!(lines[1].ends_with(",e3/p10-12"));
    }

    #[test]
    fn dense_misalignment_cases() {
        let part = SlicePartition::from_parts(4, 2, 0, vec![0, 0, 1, 1], vec![1, -1, 1, -1]).unwrap();
        let v = LexicalVector::new(vec![1.0, 2.0, 3.0, 0.5]).unwrap();
        assert_eq!(misalignment_rate(&v, &v, &part).unwrap(), 0.0);
        let s = sign_cancellation_stats(&v, &v, &part).unwrap();
        assert_eq!(s, CancellationStats { aligned: 2, opposite: 0, same: 0 });

        let a = LexicalVector::new(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = LexicalVector::new(vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(misalignment_rate(&a, &b, &part).unwrap(), 1.0);

        let c = LexicalVector::new(vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(misalignment_rate(&a, &c, &part).unwrap(), 0.5);

        let short = LexicalVector::new(vec![1.0]).unwrap();
        assert!(misalignment_rate(&a, &short, &part).is_err());
    }

    #[test]
    fn single_slice_opposite_case() {
        let part = SlicePartition::from_parts(2, 1, 0, vec![0, 0], vec![1, -1]).unwrap();
        let q = LexicalVector::new(vec![1.0, 0.0]).unwrap();
        let p = LexicalVector::new(vec![0.0, 1.0]).unwrap();
        let s = sign_cancellation_stats(&q, &p, &part).unwrap();
        assert_eq!(s, CancellationStats { aligned: 0, opposite: 1, same: 0 });
    }

    #[test]
    fn bootstrap_bounds() {
        let xs: Vec<f64> = (0..200).map(|i| 1.0 + (i % 7) as f64 * 0.01).collect();
        let lb = bootstrap_lower_bound(&xs, 500, 0.95, 1).unwrap();
        let (mean, _) = mean_stderr(&xs);
        assert!(lb <= mean && lb > 1.0);
        assert_eq!(lb, bootstrap_lower_bound(&xs, 500, 0.95, 1).unwrap());
        assert!(bootstrap_lower_bound(&[], 10, 0.95, 1).is_err());
    }

    #[test]
    fn mean_stderr_oracle() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3
        assert!((se - libm::sqrt(5.0 / 3.0 / 4.0)).abs() < 1e-15);
    }

    fn arb_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, u64, usize)> {
        (
            prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 24),
            prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 24),
            any::<u64>(),
            1usize..=24,
        )
    }

    fn sparse_of(v: &[f64]) -> SparseLexical {
        let indices: Vec<u32> = (0..v.len() as u32).filter(|&i| v[i as usize] > 0.0).collect();
        let values = indices.iter().map(|&i| v[i as usize]).collect();
        SparseLexical {
            vocab_size: v.len(),
            indices,
            values,
        }
    }

    proptest! {
        #[test]
        fn sparse_stats_match_dense((q, p, seed, d) in arb_pair()) {
            let part = make_partition(24, d, seed).unwrap();
            let dq = LexicalVector::new(q.clone()).unwrap();
            let dp = LexicalVector::new(p.clone()).unwrap();
            let dense = sign_cancellation_stats(&dq, &dp, &part).unwrap();
            prop_assert_eq!(dense.total(), d);
            let wq = prune_sparse(&sparse_of(&q), &part).unwrap();
            let wp = prune_sparse(&sparse_of(&p), &part).unwrap();
            prop_assert_eq!(sparse_cancellation_stats(&wq, &wp, &part, false), dense);
            let active = sparse_cancellation_stats(&wq, &wp, &part, true);
            prop_assert!(active.total() <= d);
        }

        #[test]
        fn aligned_slices_contribute_equally((q, p, seed, d) in arb_pair()) {
            let part = make_partition(24, d, seed).unwrap();
            let dq = LexicalVector::new(q).unwrap();
            let dp = LexicalVector::new(p).unwrap();
            let (sq, iq) = prune_semi(&dq, &part).unwrap();
            let (sp, ip) = prune_semi(&dp, &part).unwrap();
            let fq = prune_full(&dq, &part).unwrap();
            let fp = prune_full(&dp, &part).unwrap();
            for n in 0..d {
                if iq.0[n] == ip.0[n] {
                    let semi = sq.values()[n] * sp.values()[n];
                    let full = fq.values()[n] * fp.values()[n];
                    prop_assert_eq!(semi, full);
                }
            }
        }
    }
}
