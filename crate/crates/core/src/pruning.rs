//! Slice max pooling: vocabulary-sized lexical vectors down to `d` dimensions.
//!
//! The vocabulary is shuffled once (seeded) and dealt into `d` contiguous
//! slices; the first `vocab_size mod d` slices get one extra entry. Inside a
//! slice, the first `ceil(|S_n| / 2)` dealt entries form the positive half and
//! the rest the negative half. Pruning keeps each slice's maximum (semi
//! aggregation, nonnegative) and optionally flips its sign when the winning
//! entry sits in the negative half (full aggregation), so two vectors whose
//! slice winners differ and land in opposite halves cancel instead of adding a
//! spurious match.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::lexrep::LexicalVector;
use crate::linalg::Matrix;
use crate::rng::{Xorshift64Star, PRNG_NAME};
use crate::{Error, Result};

/// SHA-256 digest identifying a partition (or all zeros for "none").
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub const NONE: Fingerprint = Fingerprint([0; 32]);

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "…)")
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Assignment of vocabulary entries to slices and sign halves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlicePartition {
    vocab_size: usize,
    d: usize,
    seed: u64,
    slice_of: Vec<u32>,
    sign_of: Vec<i8>,
    // CSR layout of slice members in ascending vocabulary order.
    offsets: Vec<u32>,
    members: Vec<u32>,
}

impl SlicePartition {
    /// Seeded random partition of `0..vocab_size` into `d` slices.
    pub fn new(vocab_size: usize, d: usize, seed: u64) -> Result<Self> {
        if d == 0 || d > vocab_size {
            return Err(Error::invalid("partition needs 1 <= d <= vocab_size"));
        }
        if vocab_size > u32::MAX as usize {
            return Err(Error::invalid("vocabulary too large"));
        }
        let mut perm: Vec<u32> = (0..vocab_size as u32).collect();
        Xorshift64Star::new(seed).shuffle(&mut perm);

        let base = vocab_size / d;
        let extra = vocab_size % d;
        let mut slice_of = vec![0u32; vocab_size];
        let mut sign_of = vec![0i8; vocab_size];
        let mut at = 0;
        for n in 0..d {
            let size = base + usize::from(n < extra);
            let positive = size.div_ceil(2);
            for (k, &v) in perm[at..at + size].iter().enumerate() {
                slice_of[v as usize] = n as u32;
                sign_of[v as usize] = if k < positive { 1 } else { -1 };
            }
            at += size;
        }
        Self::assemble(vocab_size, d, seed, slice_of, sign_of)
    }

    /// Rebuilds a partition from explicit arrays, checking every invariant.
    pub fn from_parts(
        vocab_size: usize,
        d: usize,
        seed: u64,
        slice_of: Vec<u32>,
        sign_of: Vec<i8>,
    ) -> Result<Self> {
        if d == 0 || d > vocab_size {
            return Err(Error::invalid("partition needs 1 <= d <= vocab_size"));
        }
        Error::check_dim("slice_of", vocab_size, slice_of.len())?;
        Error::check_dim("sign_of", vocab_size, sign_of.len())?;
        if slice_of.iter().any(|&s| s as usize >= d) {
            return Err(Error::invalid("slice index out of range"));
        }
        if sign_of.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::invalid("sign must be +1 or -1"));
        }
        let part = Self::assemble(vocab_size, d, seed, slice_of, sign_of)?;
        let mut min = usize::MAX;
        let mut max = 0;
        for n in 0..d {
            let m = part.slice(n);
            min = min.min(m.len());
            max = max.max(m.len());
            let pos = m.iter().filter(|&&v| part.sign_of[v as usize] > 0).count() as i64;
            let neg = m.len() as i64 - pos;
            if (pos - neg).abs() > 1 {
                return Err(Error::invalid("slice sign halves differ by more than one"));
            }
        }
        if min == 0 {
            return Err(Error::invalid("empty slice"));
        }
        if max - min > 1 {
            return Err(Error::invalid("slice sizes differ by more than one"));
        }
        Ok(part)
    }

    fn assemble(
        vocab_size: usize,
        d: usize,
        seed: u64,
        slice_of: Vec<u32>,
        sign_of: Vec<i8>,
    ) -> Result<Self> {
        let mut counts = vec![0u32; d + 1];
        for &s in &slice_of {
            counts[s as usize + 1] += 1;
        }
        for n in 0..d {
            counts[n + 1] += counts[n];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut members = vec![0u32; vocab_size];
        for (v, &s) in slice_of.iter().enumerate() {
            members[cursor[s as usize] as usize] = v as u32;
            cursor[s as usize] += 1;
        }
        Ok(Self {
            vocab_size,
            d,
            seed,
            slice_of,
            sign_of,
            offsets,
            members,
        })
    }

    #[inline]
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn prng_name(&self) -> &'static str {
        PRNG_NAME
    }

    pub fn slice_of(&self) -> &[u32] {
        &self.slice_of
    }

    pub fn sign_of(&self) -> &[i8] {
        &self.sign_of
    }

    /// Members of slice `n`, ascending.
    #[inline]
    pub fn slice(&self, n: usize) -> &[u32] {
        &self.members[self.offsets[n] as usize..self.offsets[n + 1] as usize]
    }

    /// SHA-256 over `"AGGP" | u64 vocab | u64 d | slice_of (u32 LE) | sign_of (i8)`.
    /// The seed is not part of the digest; two seeds yielding identical
    /// arrays are the same partition.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Sha256::new();
        h.update(b"AGGP");
        h.update((self.vocab_size as u64).to_le_bytes());
        h.update((self.d as u64).to_le_bytes());
        for &s in &self.slice_of {
            h.update(s.to_le_bytes());
        }
        let signs: Vec<u8> = self.sign_of.iter().map(|&s| s as u8).collect();
        h.update(&signs);
        Fingerprint(h.finalize().into())
    }

    fn check(&self, v: &LexicalVector) -> Result<()> {
        Error::check_dim("lexical vector vs partition", self.vocab_size, v.vocab_size())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggKind {
    /// Per-slice maxima, nonnegative.
    Semi,
    /// Per-slice maxima signed by the winner's half.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggVector {
    values: Vec<f64>,
    kind: AggKind,
}

impl AggVector {
    pub fn new(values: Vec<f64>, kind: AggKind) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("aggregated vector"));
        }
        if kind == AggKind::Semi && values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("semi-aggregated vector must be nonnegative"));
        }
        Ok(Self { values, kind })
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> AggKind {
        self.kind
    }

    pub fn dot(&self, other: &AggVector) -> f64 {
        crate::linalg::dot(&self.values, &other.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Per-slice winning vocabulary ids. Diagnostic only; scoring never needs them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgmaxIds(pub Vec<u32>);

pub fn make_partition(vocab_size: usize, d: usize, seed: u64) -> Result<SlicePartition> {
    SlicePartition::new(vocab_size, d, seed)
}

/// Slice max pooling. Ties resolve to the lowest vocabulary index.
pub fn prune_semi(v: &LexicalVector, part: &SlicePartition) -> Result<(AggVector, ArgmaxIds)> {
    part.check(v)?;
    let x = v.values();
    let mut values = Vec::with_capacity(part.d());
    let mut ids = Vec::with_capacity(part.d());
    for n in 0..part.d() {
        let members = part.slice(n);
        let mut best = members[0];
        for &m in &members[1..] {
            if x[m as usize] > x[best as usize] {
                best = m;
            }
        }
        values.push(x[best as usize]);
        ids.push(best);
    }
    Ok((
        AggVector {
            values,
            kind: AggKind::Semi,
        },
        ArgmaxIds(ids),
    ))
}

pub fn prune_full(v: &LexicalVector, part: &SlicePartition) -> Result<AggVector> {
    let (semi, ids) = prune_semi(v, part)?;
    let values = semi
        .values
        .iter()
        .zip(&ids.0)
        .map(|(&a, &id)| a * f64::from(part.sign_of[id as usize]))
        .collect();
    Ok(AggVector {
        values,
        kind: AggKind::Full,
    })
}

/// Learned-projection baseline: `vᵀ · proj`, `proj` is `vocab_size × d`.
pub fn prune_linear(v: &LexicalVector, proj: &Matrix) -> Result<Vec<f64>> {
    Error::check_dim("lexical vector vs projection rows", proj.rows(), v.vocab_size())?;
    proj.vec_mul(v.values())
}

/// Slice mean pooling, the weaker ablation of [`prune_semi`].
pub fn prune_semi_mean(v: &LexicalVector, part: &SlicePartition) -> Result<AggVector> {
    part.check(v)?;
    let x = v.values();
    let values = (0..part.d())
        .map(|n| {
            let m = part.slice(n);
            m.iter().map(|&i| x[i as usize]).sum::<f64>() / m.len() as f64
        })
        .collect();
    Ok(AggVector {
        values,
        kind: AggKind::Semi,
    })
}

/// Sparse nonnegative lexical vector: sorted unique indices with positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLexical {
    pub vocab_size: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseLexical {
    pub fn to_dense(&self) -> LexicalVector {
        let mut v = vec![0.0; self.vocab_size];
        for (&i, &x) in self.indices.iter().zip(&self.values) {
            v[i as usize] = x;
        }
        LexicalVector::new(v).expect("sparse lexical vectors are nonnegative")
    }

    pub fn dot(&self, other: &SparseLexical) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                core::cmp::Ordering::Less => i += 1,
                core::cmp::Ordering::Greater => j += 1,
                core::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// One occupied slice after sparse slice max pooling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceWinner {
    pub slice: u32,
    pub id: u32,
    pub value: f64,
    pub sign: i8,
}

/// Slice max pooling of a sparse vector. Only slices holding a positive entry
/// are returned (sorted by slice); every other slice has value zero and, per
/// the tie rule, its lowest member as winner.
pub fn prune_sparse(v: &SparseLexical, part: &SlicePartition) -> Result<Vec<SliceWinner>> {
    Error::check_dim("sparse vector vs partition", part.vocab_size(), v.vocab_size)?;
    let mut out: Vec<SliceWinner> = Vec::with_capacity(v.indices.len());
    for (&id, &value) in v.indices.iter().zip(&v.values) {
        if value <= 0.0 {
            continue;
        }
        out.push(SliceWinner {
            slice: part.slice_of[id as usize],
            id,
            value,
            sign: part.sign_of[id as usize],
        });
    }
    // indices are ascending, so a stable sort keeps the lowest id first
    // among equal values inside a slice
    out.sort_by_key(|w| w.slice);
    out.dedup_by(|later, kept| {
        if later.slice != kept.slice {
            return false;
        }
        if later.value > kept.value {
            *kept = *later;
        }
        true
    });
    Ok(out)
}

/// `Σ_n a_n · b_n` over two sparse slice-pooled vectors; `signed` selects
/// full aggregation.
pub fn sparse_pooled_dot(a: &[SliceWinner], b: &[SliceWinner], signed: bool) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].slice.cmp(&b[j].slice) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                let s = if signed {
                    f64::from(a[i].sign * b[j].sign)
                } else {
                    1.0
                };
                acc += s * a[i].value * b[j].value;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// Signed hashing projection (count sketch) built from a partition: each
/// vocabulary entry is added, with its half's sign, into its slice. A random
/// linear map, unbiased for inner products, used as the linear baseline in the
/// approximation study.
pub fn sparse_hashed_projection(v: &SparseLexical, part: &SlicePartition) -> Vec<(u32, f64)> {
    let mut out: Vec<(u32, f64)> = v
        .indices
        .iter()
        .zip(&v.values)
        .map(|(&id, &x)| (part.slice_of[id as usize], x * f64::from(part.sign_of[id as usize])))
        .collect();
    out.sort_by_key(|e| e.0);
    out.dedup_by(|later, kept| {
        if later.0 == kept.0 {
            kept.1 += later.1;
            true
        } else {
            false
        }
    });
    out
}

pub fn sparse_dense_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}
