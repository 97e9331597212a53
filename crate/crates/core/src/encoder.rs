//! Concatenated retrieval vectors: projected `[CLS]` ⊕ pruned lexical vector.

use alloc::vec;
use alloc::vec::Vec;

use crate::lexrep::{weighted_max_pool, MlmHead, PoolingVariant, TermWeightHead, TokenEmbeddingSequence};
use crate::linalg::{dot_f32, Matrix};
use crate::pruning::{prune_full, prune_linear, prune_semi, prune_semi_mean, Fingerprint, SlicePartition};
use crate::{Error, Result};

/// Linear map from the `[CLS]` embedding to `d_cls` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClsProjection {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ClsProjection {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        Error::check_dim("cls projection bias", weight.cols(), bias.len())?;
        if weight.cols() == 0 {
            return Err(Error::invalid("cls projection with zero outputs"));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("cls projection"));
        }
        Ok(Self { weight, bias })
    }

    pub fn d_cls(&self) -> usize {
        self.weight.cols()
    }

    pub fn project(&self, cls: &[f64], with_bias: bool) -> Result<Vec<f64>> {
        let mut out = self.weight.vec_mul(cls)?;
        if with_bias {
            for (o, b) in out.iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }
}

/// Where the non-`[CLS]` half of the vector comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PoolingMode {
    /// MLM projection with learned term weights.
    #[default]
    Full,
    UnitWeight,
    NoMlm,
    /// Mean of non-special token embeddings, then a learned `d_model → d_agg` map.
    Average,
    /// Mean over every token embedding including `[CLS]`; `d_agg = d_model`.
    RepBert,
}

impl PoolingMode {
    pub fn lexical(self) -> Option<PoolingVariant> {
        match self {
            PoolingMode::Full => Some(PoolingVariant::Full),
            PoolingMode::UnitWeight => Some(PoolingVariant::UnitWeight),
            PoolingMode::NoMlm => Some(PoolingVariant::NoMlm),
            PoolingMode::Average | PoolingMode::RepBert => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PruningKind {
    Semi,
    #[default]
    Full,
    Linear,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub d_cls: usize,
    pub d_agg: usize,
    pub max_query_len: usize,
    pub max_passage_len: usize,
    pub pooling: PoolingMode,
    pub pruning: PruningKind,
    pub include_cls: bool,
    /// Add the projection bias to the `[CLS]` part.
    pub cls_bias: bool,
    /// Pool positions holding this token even though they are flagged special
    /// (e.g. to let `[SEP]` take part).
    pub pool_token: Option<u32>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_cls: 128,
            d_agg: 640,
            max_query_len: 32,
            max_passage_len: 128,
            pooling: PoolingMode::Full,
            pruning: PruningKind::Full,
            include_cls: true,
            cls_bias: true,
            pool_token: None,
        }
    }
}

impl EncoderConfig {
    /// Width of the `[CLS]` part actually emitted.
    pub fn cls_dim(&self) -> usize {
        if self.include_cls {
            self.d_cls
        } else {
            0
        }
    }

    pub fn index_dim(&self) -> usize {
        self.cls_dim() + self.d_agg
    }

    /// Whether the aggregated part is computed through a slice partition.
    pub fn uses_partition(&self) -> bool {
        self.d_agg > 0
            && self.pooling.lexical().is_some()
            && matches!(self.pruning, PruningKind::Semi | PruningKind::Full | PruningKind::Mean)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_query_len == 0 || self.max_passage_len == 0 {
            return Err(Error::invalid("maximum lengths must be at least one"));
        }
        if self.index_dim() == 0 {
            return Err(Error::invalid("encoder emits an empty vector"));
        }
        Ok(())
    }
}

/// Every learned piece `encode` may need. Optional parts are only required by
/// the configurations that use them.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderHeads {
    pub mlm: MlmHead,
    pub term_weight: TermWeightHead,
    pub cls: Option<ClsProjection>,
    /// `vocab_size × d_agg`, for [`PruningKind::Linear`].
    pub linear_prune: Option<Matrix>,
    /// `d_model × d_agg`, for [`PoolingMode::Average`].
    pub average_proj: Option<Matrix>,
}

/// The retrieval unit. Stored in single precision; the partition fingerprint
/// travels with the vector so cross-partition scoring can be refused.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatEmbedding {
    pub cls_part: Vec<f32>,
    pub agg_part: Vec<f32>,
    pub fingerprint: Fingerprint,
}

impl ConcatEmbedding {
    pub fn new(cls_part: Vec<f32>, agg_part: Vec<f32>, fingerprint: Fingerprint) -> Result<Self> {
        if cls_part.iter().chain(&agg_part).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(Self {
            cls_part,
            agg_part,
            fingerprint,
        })
    }

    pub fn dim(&self) -> usize {
        self.cls_part.len() + self.agg_part.len()
    }

    pub fn to_vec(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.cls_part);
        v.extend_from_slice(&self.agg_part);
        v
    }

    /// Splits a flat vector after `d_cls` entries.
    pub fn from_flat(flat: &[f32], d_cls: usize, fingerprint: Fingerprint) -> Result<Self> {
        if d_cls > flat.len() {
            return Err(Error::invalid("cls width exceeds vector length"));
        }
        Self::new(flat[..d_cls].to_vec(), flat[d_cls..].to_vec(), fingerprint)
    }

    /// Inner product of the concatenated vectors.
    pub fn sim(&self, other: &ConcatEmbedding) -> f64 {
        let a = self.cls_part.iter().chain(&self.agg_part);
        let b = other.cls_part.iter().chain(&other.agg_part);
        a.zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
    }

    pub fn sim_cls(&self, other: &ConcatEmbedding) -> f64 {
        dot_f32(&self.cls_part, &other.cls_part)
    }

    pub fn sim_agg(&self, other: &ConcatEmbedding) -> f64 {
        dot_f32(&self.agg_part, &other.agg_part)
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// `[CLS]` part in double precision (empty when disabled).
pub fn encode_cls(seq: &TokenEmbeddingSequence, heads: &EncoderHeads, cfg: &EncoderConfig) -> Result<Vec<f64>> {
    if cfg.cls_dim() == 0 {
        return Ok(Vec::new());
    }
    let proj = heads
        .cls
        .as_ref()
        .ok_or_else(|| Error::invalid("configuration needs a cls projection"))?;
    Error::check_dim("cls projection width", cfg.d_cls, proj.d_cls())?;
    proj.project(seq.cls_embedding(), cfg.cls_bias)
}

/// Aggregated part in double precision (empty when `d_agg = 0`).
pub fn encode_agg(
    seq: &TokenEmbeddingSequence,
    heads: &EncoderHeads,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
) -> Result<Vec<f64>> {
    if cfg.d_agg == 0 {
        return Ok(Vec::new());
    }
    let pooled = match cfg.pool_token {
        Some(t) => {
            let mut s = seq.clone();
            s.unmask_token(t);
            alloc::borrow::Cow::Owned(s)
        }
        None => alloc::borrow::Cow::Borrowed(seq),
    };
    let seq = pooled.as_ref();
    match cfg.pooling {
        PoolingMode::Average => {
            let proj = heads
                .average_proj
                .as_ref()
                .ok_or_else(|| Error::invalid("AVERAGE pooling needs a d_model x d_agg projection"))?;
            Error::check_dim("average projection width", cfg.d_agg, proj.cols())?;
            let mean = mean_rows(seq, false)?;
            proj.vec_mul(&mean)
        }
        PoolingMode::RepBert => {
            Error::check_dim("RepBERT width (d_agg = d_model)", seq.d_model(), cfg.d_agg)?;
            mean_rows(seq, true)
        }
        mode => {
            let variant = mode.lexical().expect("lexical pooling");
            let v = weighted_max_pool(seq, &heads.mlm, &heads.term_weight, variant)?;
            let agg = match cfg.pruning {
                PruningKind::Linear => {
                    let proj = heads
                        .linear_prune
                        .as_ref()
                        .ok_or_else(|| Error::invalid("linear pruning needs a vocab x d_agg projection"))?;
                    Error::check_dim("linear pruning width", cfg.d_agg, proj.cols())?;
                    prune_linear(&v, proj)?
                }
                kind => {
                    let part = part.ok_or_else(|| Error::invalid("slice pruning needs a partition"))?;
                    Error::check_dim("partition d vs d_agg", cfg.d_agg, part.d())?;
                    match kind {
                        PruningKind::Semi => prune_semi(&v, part)?.0.into_values(),
                        PruningKind::Full => prune_full(&v, part)?.into_values(),
                        _ => prune_semi_mean(&v, part)?.into_values(),
                    }
                }
            };
            Ok(agg)
        }
    }
}

fn mean_rows(seq: &TokenEmbeddingSequence, with_cls: bool) -> Result<Vec<f64>> {
    let mut acc = if with_cls {
        seq.cls_embedding().to_vec()
    } else {
        vec![0.0; seq.d_model()]
    };
    let mut count = usize::from(with_cls);
    for i in seq.pooled_positions() {
        for (a, e) in acc.iter_mut().zip(seq.embedding(i)) {
            *a += e;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySequence);
    }
    for a in &mut acc {
        *a /= count as f64;
    }
    Ok(acc)
}

/// Full encoding of one sequence into its retrieval vector.
pub fn encode(
    seq: &TokenEmbeddingSequence,
    heads: &EncoderHeads,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
) -> Result<ConcatEmbedding> {
    cfg.validate()?;
    let cls = encode_cls(seq, heads, cfg)?;
    let agg = encode_agg(seq, heads, part, cfg)?;
    let fingerprint = match part {
        Some(p) if cfg.uses_partition() => p.fingerprint(),
        _ => Fingerprint::NONE,
    };
    ConcatEmbedding::new(to_f32(&cls), to_f32(&agg), fingerprint)
}
