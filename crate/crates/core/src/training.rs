//! Contrastive fine-tuning of the toy encoder with in-batch negatives.
//!
//! Every query in a batch is scored against every passage in the batch (its
//! own positive and negatives plus those of the other queries). The objective
//! is `L + λ1·L_agg + λ2·L_cls`, three negative log-likelihoods over the same
//! candidate set scored by the concatenated, aggregated-only and `[CLS]`-only
//! inner products. Gradients are analytic; max pooling routes its subgradient
//! to the winning position (ties to the tie-break winner).

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{EncoderConfig, PruningKind};
use crate::lexrep::PoolingVariant;
use crate::linalg::{axpy, dot, log_sum_exp, softmax_in_place, Matrix};
use crate::pruning::SlicePartition;
use crate::rng::Xorshift64Star;
use crate::toy::{ParamGroup, ToyActivations, ToyEncoder};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub concat: f64,
    pub agg: f64,
    pub cls: f64,
}

/// `-ln( e^pos / (e^pos + Σ e^neg) )`, computed through log-sum-exp.
pub fn nll_loss(pos: f64, negs: &[f64]) -> f64 {
    let mut all = Vec::with_capacity(negs.len() + 1);
    all.push(pos);
    all.extend_from_slice(negs);
    (log_sum_exp(&all) - pos).max(0.0)
}

pub fn combine_losses(concat: f64, agg: f64, cls: f64, w: LossWeights) -> LossBreakdown {
    LossBreakdown {
        total: concat + w.lambda1 * agg + w.lambda2 * cls,
        concat,
        agg,
        cls,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub query: Vec<u32>,
    /// Index into the corpus.
    pub positive: usize,
    pub negatives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainDataset {
    pub corpus: Vec<Vec<u32>>,
    pub examples: Vec<TrainExample>,
}

/// Queries and the deduplicated passages they are scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub queries: Vec<Vec<u32>>,
    pub passages: Vec<Vec<u32>>,
    /// Passage slot of each query's positive.
    pub positive: Vec<usize>,
    pub negatives: Vec<Vec<usize>>,
}

impl TrainingBatch {
    /// Collects `examples[i]` for each `i` in `which`, keeping the first
    /// `negatives` hard negatives per query and truncating token sequences to
    /// the configured maximum lengths.
    pub fn from_examples(
        data: &TrainDataset,
        which: &[usize],
        negatives: usize,
        cfg: &EncoderConfig,
    ) -> Result<Self> {
        if which.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
        let mut passages = Vec::new();
        let mut slot_of = |doc: usize, passages: &mut Vec<Vec<u32>>| -> Result<usize> {
            let text = data
                .corpus
                .get(doc)
                .ok_or_else(|| Error::invalid("training example refers to a missing document"))?;
            Ok(*slots.entry(doc).or_insert_with(|| {
                passages.push(truncate(text, cfg.max_passage_len));
                passages.len() - 1
            }))
        };
        let mut batch = TrainingBatch {
            queries: Vec::with_capacity(which.len()),
            passages: Vec::new(),
            positive: Vec::with_capacity(which.len()),
            negatives: Vec::with_capacity(which.len()),
        };
        for &e in which {
            let ex = data
                .examples
                .get(e)
                .ok_or_else(|| Error::invalid("example index out of range"))?;
            if ex.negatives.len() < negatives {
                return Err(Error::invalid(
                    "negative count must be uniform within a batch; an example has too few negatives",
                ));
            }
            batch.queries.push(truncate(&ex.query, cfg.max_query_len));
            batch.positive.push(slot_of(ex.positive, &mut passages)?);
            let mut negs = Vec::with_capacity(negatives);
            for &n in &ex.negatives[..negatives] {
                negs.push(slot_of(n, &mut passages)?);
            }
            batch.negatives.push(negs);
        }
        batch.passages = passages;
        Ok(batch)
    }
}

fn truncate(tokens: &[u32], max: usize) -> Vec<u32> {
    tokens[..tokens.len().min(max)].to_vec()
}

/// Which parameter groups receive gradients and updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable([bool; 13]);

impl Trainable {
    pub fn all() -> Self {
        Self([true; 13])
    }

    pub fn only(groups: &[ParamGroup]) -> Self {
        let mut t = [false; 13];
        for g in groups {
            t[g.index()] = true;
        }
        Self(t)
    }

    /// `self` with `groups` frozen.
    pub fn without(mut self, groups: &[ParamGroup]) -> Self {
        for g in groups {
            self.0[g.index()] = false;
        }
        self
    }

    pub fn contains(&self, g: ParamGroup) -> bool {
        self.0[g.index()]
    }

    pub fn groups(&self) -> impl Iterator<Item = ParamGroup> + '_ {
        ParamGroup::ALL.into_iter().filter(|&g| self.contains(g))
    }
}

impl Default for Trainable {
    fn default() -> Self {
        Self::all()
    }
}

/// Gradient buffers shaped like the encoder's parameter groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    groups: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(enc: &ToyEncoder) -> Self {
        Self {
            groups: ParamGroup::ALL.iter().map(|&g| vec![0.0; enc.param(g).len()]).collect(),
        }
    }

    pub fn get(&self, g: ParamGroup) -> &[f64] {
        &self.groups[g.index()]
    }

    pub(crate) fn buf(&mut self, g: ParamGroup) -> &mut [f64] {
        &mut self.groups[g.index()]
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.groups.iter().flatten().map(|x| x * x).sum())
    }
}

fn add_outer(buf: &mut [f64], cols: usize, x: &[f64], y: &[f64]) {
    for (r, &xr) in x.iter().enumerate() {
        if xr != 0.0 {
            axpy(xr, y, &mut buf[r * cols..(r + 1) * cols]);
        }
    }
}

fn lexical_variant(cfg: &EncoderConfig) -> Result<PoolingVariant> {
    cfg.pooling
        .lexical()
        .ok_or_else(|| Error::invalid("training supports the lexical pooling modes only"))
}

fn check_setup(enc: &ToyEncoder, part: Option<&SlicePartition>, cfg: &EncoderConfig) -> Result<()> {
    cfg.validate()?;
    lexical_variant(cfg)?;
    if cfg.cls_dim() > 0 {
        Error::check_dim("config d_cls vs encoder", enc.config.d_cls, cfg.d_cls)?;
    }
    if cfg.d_agg > 0 {
        match cfg.pruning {
            PruningKind::Linear => {
                Error::check_dim("config d_agg vs encoder", enc.config.d_agg, cfg.d_agg)?
            }
            _ => {
                let p = part.ok_or_else(|| Error::invalid("slice pruning needs a partition"))?;
                Error::check_dim("partition d vs d_agg", cfg.d_agg, p.d())?;
                Error::check_dim("partition vocabulary vs encoder", enc.config.vocab, p.vocab_size())?;
            }
        }
    }
    Ok(())
}

/// Forward intermediates of one sequence.
struct SeqForward {
    tokens: Vec<u32>,
    act: ToyActivations,
    /// `len × vocab` token distributions (empty for the indicator variant).
    probs: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
    winner: Vec<u32>,
    has_winner: Vec<bool>,
    slice_ids: Vec<u32>,
    cls: Vec<f64>,
    agg: Vec<f64>,
}

fn seq_forward(
    enc: &ToyEncoder,
    tokens: &[u32],
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
) -> Result<SeqForward> {
    let act = enc.forward_cached(tokens)?;
    let variant = lexical_variant(cfg)?;
    let vocab = enc.config.vocab;
    let len = tokens.len();

    let cls = if cfg.cls_dim() > 0 {
        enc.cls_proj.project(&act.cls_h, cfg.cls_bias)?
    } else {
        Vec::new()
    };

    let mut out = SeqForward {
        tokens: tokens.to_vec(),
        probs: Vec::new(),
        z: vec![0.0; len],
        w: vec![1.0; len],
        v: Vec::new(),
        winner: Vec::new(),
        has_winner: Vec::new(),
        slice_ids: Vec::new(),
        cls,
        agg: Vec::new(),
        act,
    };
    if cfg.d_agg == 0 {
        return Ok(out);
    }

    for i in 0..len {
        out.z[i] = dot(out.act.h.row(i), &enc.tw_head.weight) + enc.tw_head.bias;
        if variant != PoolingVariant::UnitWeight {
            out.w[i] = out.z[i].abs();
        }
    }
    let mut v = vec![0.0; vocab];
    let mut winner = vec![0u32; vocab];
    let mut has_winner = vec![variant != PoolingVariant::NoMlm; vocab];
    if variant == PoolingVariant::NoMlm {
        for (i, &t) in tokens.iter().enumerate() {
            let t = t as usize;
            if !has_winner[t] || out.w[i] > v[t] {
                v[t] = out.w[i];
                winner[t] = i as u32;
                has_winner[t] = true;
            }
        }
    } else {
        let mut probs = vec![0.0; len * vocab];
        for i in 0..len {
            let p = &mut probs[i * vocab..(i + 1) * vocab];
            enc.mlm_head.logits_into(out.act.h.row(i), p);
            softmax_in_place(p);
            let wi = out.w[i];
            for (u, &pu) in p.iter().enumerate() {
                let x = wi * pu;
                if x > v[u] {
                    v[u] = x;
                    winner[u] = i as u32;
                }
            }
        }
        out.probs = probs;
    }

    out.agg = match cfg.pruning {
        PruningKind::Linear => enc.linear_prune.vec_mul(&v)?,
        PruningKind::Mean => {
            let part = part.expect("checked");
            (0..part.d())
                .map(|n| {
                    let m = part.slice(n);
                    m.iter().map(|&u| v[u as usize]).sum::<f64>() / m.len() as f64
                })
                .collect()
        }
        kind => {
            let part = part.expect("checked");
            let mut agg = Vec::with_capacity(part.d());
            for n in 0..part.d() {
                let m = part.slice(n);
                let mut best = m[0];
                for &u in &m[1..] {
                    if v[u as usize] > v[best as usize] {
                        best = u;
                    }
                }
                out.slice_ids.push(best);
                let s = if kind == PruningKind::Full {
                    f64::from(part.sign_of()[best as usize])
                } else {
                    1.0
                };
                agg.push(s * v[best as usize]);
            }
            agg
        }
    };
    out.v = v;
    out.winner = winner;
    out.has_winner = has_winner;
    Ok(out)
}

fn seq_backward(
    fw: &SeqForward,
    dcls: &[f64],
    dagg: &[f64],
    enc: &ToyEncoder,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
    grads: &mut Gradients,
) {
    let cfgm = &enc.config;
    let (vocab, d) = (cfgm.vocab, cfgm.d_model);
    let len = fw.tokens.len();
    let variant = lexical_variant(cfg).expect("checked");
    let mut dh = Matrix::zeros(len, d);

    if cfg.d_agg > 0 {
        let mut dv = vec![0.0; vocab];
        match cfg.pruning {
            PruningKind::Linear => {
                for (u, dvu) in dv.iter_mut().enumerate() {
                    *dvu = dot(enc.linear_prune.row(u), dagg);
                }
                add_outer(grads.buf(ParamGroup::LinearPrune), cfgm.d_agg, &fw.v, dagg);
            }
            PruningKind::Mean => {
                let part = part.expect("checked");
                for (n, &g) in dagg.iter().enumerate() {
                    let m = part.slice(n);
                    for &u in m {
                        dv[u as usize] += g / m.len() as f64;
                    }
                }
            }
            kind => {
                let part = part.expect("checked");
                for (&id, &g) in fw.slice_ids.iter().zip(dagg) {
                    let s = if kind == PruningKind::Full {
                        f64::from(part.sign_of()[id as usize])
                    } else {
                        1.0
                    };
                    dv[id as usize] += s * g;
                }
            }
        }

        let mut dw = vec![0.0; len];
        let mut dp = if fw.probs.is_empty() {
            Vec::new()
        } else {
            vec![0.0; len * vocab]
        };
        for (u, &g) in dv.iter().enumerate() {
            if g == 0.0 || !fw.has_winner[u] {
                continue;
            }
            let i = fw.winner[u] as usize;
            if variant == PoolingVariant::NoMlm {
                dw[i] += g;
            } else {
                dw[i] += g * fw.probs[i * vocab + u];
                dp[i * vocab + u] += g * fw.w[i];
            }
        }

        if variant != PoolingVariant::UnitWeight {
            for i in 0..len {
                let dz = dw[i] * fw.z[i].signum() * f64::from(u8::from(fw.z[i] != 0.0));
                if dz == 0.0 {
                    continue;
                }
                axpy(dz, fw.act.h.row(i), grads.buf(ParamGroup::TermWeight));
                grads.buf(ParamGroup::TermBias)[0] += dz;
                axpy(dz, &enc.tw_head.weight, dh.row_mut(i));
            }
        }

        if !dp.is_empty() {
            let mut dlogit = vec![0.0; vocab];
            for i in 0..len {
                let dpi = &dp[i * vocab..(i + 1) * vocab];
                if dpi.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let p = &fw.probs[i * vocab..(i + 1) * vocab];
                let s = dot(dpi, p);
                for u in 0..vocab {
                    dlogit[u] = p[u] * (dpi[u] - s);
                }
                add_outer(grads.buf(ParamGroup::MlmWeight), vocab, fw.act.h.row(i), &dlogit);
                axpy(1.0, &dlogit, grads.buf(ParamGroup::MlmBias));
                let back = enc.mlm_head.weight.mul_vec(&dlogit);
                axpy(1.0, &back, dh.row_mut(i));
            }
        }
    }

    let mut dcls_h = vec![0.0; d];
    if cfg.cls_dim() > 0 {
        add_outer(grads.buf(ParamGroup::ClsWeight), cfgm.d_cls, &fw.act.cls_h, dcls);
        if cfg.cls_bias {
            axpy(1.0, dcls, grads.buf(ParamGroup::ClsBias));
        }
        dcls_h = enc.cls_proj.weight.mul_vec(dcls);
    }

    backbone_backward(&fw.act, &fw.tokens, &dh, &dcls_h, enc, grads);
}

/// Backpropagates `∂/∂h` and `∂/∂h_cls` through the normalized tanh mixing
/// layer into the backbone parameter groups.
pub(crate) fn backbone_backward(
    a: &ToyActivations,
    tokens: &[u32],
    dh: &Matrix,
    dcls_h: &[f64],
    enc: &ToyEncoder,
    grads: &mut Gradients,
) {
    let d = enc.config.d_model;
    let len = tokens.len();
    let mut dctx = vec![0.0; d];
    let mut mix_back = |input: &[f64], u: &[f64], h: &[f64], r: f64, dh: &[f64], grads: &mut Gradients| -> Vec<f64> {
        // through h = u / r, then tanh
        let m = dot(dh, h) / d as f64;
        let dpre: Vec<f64> = u
            .iter()
            .zip(h)
            .zip(dh)
            .map(|((ui, hi), g)| (g - hi * m) / r * (1.0 - ui * ui))
            .collect();
        add_outer(grads.buf(ParamGroup::MixToken), d, input, &dpre);
        add_outer(grads.buf(ParamGroup::MixContext), d, &a.ctx, &dpre);
        axpy(1.0, &dpre, grads.buf(ParamGroup::MixBias));
        axpy(1.0, &enc.mix_context.mul_vec(&dpre), &mut dctx);
        enc.mix_token.mul_vec(&dpre)
    };
    if dcls_h.iter().any(|&g| g != 0.0) {
        let dcls_token = mix_back(&enc.cls_token, &a.cls_u, &a.cls_h, a.cls_rms, dcls_h, grads);
        axpy(1.0, &dcls_token, grads.buf(ParamGroup::ClsToken));
    }
    let mut dx = Matrix::zeros(len, d);
    for i in 0..len {
        let g = mix_back(a.x.row(i), a.u.row(i), a.h.row(i), a.rms[i], dh.row(i), grads);
        dx.row_mut(i).copy_from_slice(&g);
    }
    for i in 0..len {
        let row = dx.row_mut(i);
        axpy(1.0 / len as f64, &dctx, row);
        let t = tokens[i] as usize;
        axpy(1.0, row, &mut grads.buf(ParamGroup::TokenEmbedding)[t * d..(t + 1) * d]);
        axpy(1.0, row, &mut grads.buf(ParamGroup::PositionEmbedding)[i * d..(i + 1) * d]);
    }
}

struct BatchForward {
    queries: Vec<SeqForward>,
    passages: Vec<SeqForward>,
}

fn batch_forward(
    batch: &TrainingBatch,
    enc: &ToyEncoder,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
) -> Result<BatchForward> {
    if batch.queries.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_setup(enc, part, cfg)?;
    let queries = batch
        .queries
        .iter()
        .map(|q| seq_forward(enc, q, part, cfg))
        .collect::<Result<Vec<_>>>()?;
    let passages = batch
        .passages
        .iter()
        .map(|p| seq_forward(enc, p, part, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchForward { queries, passages })
}

/// Per-query NLL over the batch plus `∂loss/∂score` (already divided by the
/// number of queries).
fn nll_rows(scores: &[Vec<f64>], positive: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let b = scores.len() as f64;
    let mut loss = 0.0;
    let mut coef = Vec::with_capacity(scores.len());
    for (row, &pos) in scores.iter().zip(positive) {
        let lse = log_sum_exp(row);
        loss += lse - row[pos];
        let mut g: Vec<f64> = row.iter().map(|s| libm::exp(s - lse) / b).collect();
        g[pos] -= 1.0 / b;
        coef.push(g);
    }
    (loss / b, coef)
}

fn score_matrix(qs: &[SeqForward], ps: &[SeqForward], part: fn(&SeqForward) -> &[f64]) -> Vec<Vec<f64>> {
    qs.iter()
        .map(|q| ps.iter().map(|p| dot(part(q), part(p))).collect())
        .collect()
}

fn losses_and_coefficients(
    fw: &BatchForward,
    batch: &TrainingBatch,
    weights: LossWeights,
) -> (LossBreakdown, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let s_cls = score_matrix(&fw.queries, &fw.passages, |s| &s.cls);
    let s_agg = score_matrix(&fw.queries, &fw.passages, |s| &s.agg);
    let s_cat: Vec<Vec<f64>> = s_cls
        .iter()
        .zip(&s_agg)
        .map(|(c, a)| c.iter().zip(a).map(|(x, y)| x + y).collect())
        .collect();
    let (l_cat, g_cat) = nll_rows(&s_cat, &batch.positive);
    let (l_agg, g_agg) = nll_rows(&s_agg, &batch.positive);
    let (l_cls, g_cls) = nll_rows(&s_cls, &batch.positive);
    let mix = |extra: &[Vec<f64>], lambda: f64| -> Vec<Vec<f64>> {
        g_cat
            .iter()
            .zip(extra)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + lambda * y).collect())
            .collect()
    };
    let c_agg = mix(&g_agg, weights.lambda1);
    let c_cls = mix(&g_cls, weights.lambda2);
    (combine_losses(l_cat, l_agg, l_cls, weights), c_agg, c_cls)
}

pub fn batch_loss(
    batch: &TrainingBatch,
    enc: &ToyEncoder,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
    weights: LossWeights,
) -> Result<LossBreakdown> {
    let fw = batch_forward(batch, enc, part, cfg)?;
    Ok(losses_and_coefficients(&fw, batch, weights).0)
}

/// Loss and analytic gradient of the total loss. Frozen groups come back zero.
pub fn gradients(
    batch: &TrainingBatch,
    enc: &ToyEncoder,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
    weights: LossWeights,
    trainable: Trainable,
) -> Result<(LossBreakdown, Gradients)> {
    let fw = batch_forward(batch, enc, part, cfg)?;
    let (loss, c_agg, c_cls) = losses_and_coefficients(&fw, batch, weights);
    let mut grads = Gradients::zeros_like(enc);

    let cls_dim = fw.queries[0].cls.len();
    let agg_dim = fw.queries[0].agg.len();
    let mut d_q = vec![(vec![0.0; cls_dim], vec![0.0; agg_dim]); fw.queries.len()];
    let mut d_p = vec![(vec![0.0; cls_dim], vec![0.0; agg_dim]); fw.passages.len()];
    for (i, q) in fw.queries.iter().enumerate() {
        for (j, p) in fw.passages.iter().enumerate() {
            let (ca, cc) = (c_agg[i][j], c_cls[i][j]);
            axpy(cc, &p.cls, &mut d_q[i].0);
            axpy(ca, &p.agg, &mut d_q[i].1);
            axpy(cc, &q.cls, &mut d_p[j].0);
            axpy(ca, &q.agg, &mut d_p[j].1);
        }
    }
    for (s, (dc, da)) in fw.queries.iter().zip(&d_q).chain(fw.passages.iter().zip(&d_p)) {
        seq_backward(s, dc, da, enc, part, cfg, &mut grads);
    }
    for g in ParamGroup::ALL {
        if !trainable.contains(g) {
            grads.buf(g).fill(0.0);
        }
    }
    Ok((loss, grads))
}

/// Discrete decisions of the forward pass: pooling winners, slice winners and
/// term-weight signs. Finite differences are only meaningful between points
/// where this is unchanged.
pub fn batch_structure(
    batch: &TrainingBatch,
    enc: &ToyEncoder,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
) -> Result<Vec<u32>> {
    Ok(structure_of(&batch_forward(batch, enc, part, cfg)?))
}

/// [`batch_loss`] and [`batch_structure`] from one forward pass.
pub fn loss_and_structure(
    batch: &TrainingBatch,
    enc: &ToyEncoder,
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
    weights: LossWeights,
) -> Result<(LossBreakdown, Vec<u32>)> {
    let fw = batch_forward(batch, enc, part, cfg)?;
    Ok((losses_and_coefficients(&fw, batch, weights).0, structure_of(&fw)))
}

fn structure_of(fw: &BatchForward) -> Vec<u32> {
    let mut sig = Vec::new();
    for s in fw.queries.iter().chain(&fw.passages) {
        sig.extend_from_slice(&s.winner);
        sig.extend_from_slice(&s.slice_ids);
        sig.extend(s.z.iter().map(|z| u32::from(*z > 0.0)));
    }
    sig
}

/// Plain SGD with optional momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Self {
            lr,
            momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, enc: &mut ToyEncoder, grads: &Gradients, trainable: Trainable) {
        let vel = self.velocity.get_or_insert_with(|| Gradients::zeros_like(enc));
        for g in ParamGroup::ALL {
            if !trainable.contains(g) {
                continue;
            }
            let v = vel.buf(g);
            for (vi, gi) in v.iter_mut().zip(grads.get(g)) {
                *vi = self.momentum * *vi + gi;
            }
            for (p, vi) in enc.param_mut(g).iter_mut().zip(v.iter()) {
                *p -= self.lr * vi;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many optimizer steps; cycles epochs if needed.
    pub max_steps: Option<usize>,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub trainable: Trainable,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            max_steps: None,
            lr: 5e-6,
            momentum: 0.0,
            batch_size: 8,
            negatives: 7,
            seed: 0,
            weights: LossWeights::default(),
            trainable: Trainable::all(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: LossBreakdown,
}

/// Minibatch SGD over `data`; example order is reshuffled every epoch from
/// `cfg.seed`.
pub fn train(
    data: &TrainDataset,
    mut enc: ToyEncoder,
    part: Option<&SlicePartition>,
    enc_cfg: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<(ToyEncoder, Vec<StepRecord>)> {
    if data.examples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    check_setup(&enc, part, enc_cfg)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let mut trace = Vec::new();
    let mut order: Vec<usize> = (0..data.examples.len()).collect();
    let mut epoch = 0;
    loop {
        let done = match cfg.max_steps {
            Some(max) => trace.len() >= max,
            None => epoch >= cfg.epochs,
        };
        if done {
            break;
        }
        Xorshift64Star::derived(cfg.seed, epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps.is_some_and(|m| trace.len() >= m) {
                break;
            }
            let batch = TrainingBatch::from_examples(data, chunk, cfg.negatives, enc_cfg)?;
            let (loss, grads) = gradients(&batch, &enc, part, enc_cfg, cfg.weights, cfg.trainable)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            opt.step(&mut enc, &grads, cfg.trainable);
            trace.push(StepRecord {
                step: trace.len(),
                epoch,
                loss,
            });
        }
        epoch += 1;
    }
    Ok((enc, trace))
}

/// Retrieval vector of a token sequence under the toy encoder, in double
/// precision, through the same code path training uses.
pub fn embed_tokens(
    enc: &ToyEncoder,
    tokens: &[u32],
    part: Option<&SlicePartition>,
    cfg: &EncoderConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_setup(enc, part, cfg)?;
    let fw = seq_forward(enc, tokens, part, cfg)?;
    Ok((fw.cls, fw.agg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode, PoolingMode};
    use crate::pruning::make_partition;
    use crate::toy::ToyConfig;

    #[test]
    fn nll_cases() {
        assert!((nll_loss(0.0, &[0.0, 0.0]) - 3f64.ln()).abs() < 1e-12);
        assert!((nll_loss(3f64.ln(), &[0.0]) - (-(0.75f64).ln())).abs() < 1e-12);
        assert_eq!(nll_loss(5.0, &[]), 0.0);
        assert!(nll_loss(1e4, &[0.0]) < 1e-12);
    }

    #[test]
    fn nll_shift_invariant_and_monotone() {
        let base = nll_loss(0.3, &[0.1, -0.4, 1.2]);
        let shifted = nll_loss(10.3, &[10.1, 9.6, 11.2]);
        assert!((base - shifted).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let l = nll_loss(-2.0 + 0.25 * k as f64, &[0.1, -0.4, 1.2]);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn combine() {
        let l = combine_losses(1.0, 2.0, 4.0, LossWeights::default());
        assert_eq!(l.total, 4.0);
        let l = combine_losses(1.0, 2.0, 4.0, LossWeights { lambda1: 0.0, lambda2: 0.0 });
        assert_eq!(l.total, 1.0);
    }

    fn setup(seed: u64) -> (ToyEncoder, SlicePartition, EncoderConfig, TrainDataset) {
        let tc = ToyConfig {
            vocab: 24,
            d_model: 6,
            max_len: 8,
            d_cls: 3,
            d_agg: 6,
            init_scale: 0.5,
            seed,
        };
        let enc = ToyEncoder::new(tc).unwrap();
        let part = make_partition(24, 6, seed + 1).unwrap();
        let cfg = EncoderConfig {
            d_cls: 3,
            d_agg: 6,
            max_query_len: 8,
            max_passage_len: 8,
            ..EncoderConfig::default()
        };
        let mut r = Xorshift64Star::new(seed);
        let corpus: Vec<Vec<u32>> = (0..6)
            .map(|_| (0..5).map(|_| r.below(24) as u32).collect())
            .collect();
        let examples = (0..3)
            .map(|i| TrainExample {
                query: corpus[i][..3].to_vec(),
                positive: i,
                negatives: vec![(i + 3) % 6, (i + 4) % 6],
            })
            .collect();
        (enc, part, cfg, TrainDataset { corpus, examples })
    }

    #[test]
    fn batch_dedupes_passages() {
        let (_, _, cfg, data) = setup(1);
        let b = TrainingBatch::from_examples(&data, &[0, 1, 2], 2, &cfg).unwrap();
        assert_eq!(b.queries.len(), 3);
        assert_eq!(b.passages.len(), 6);
        assert!(TrainingBatch::from_examples(&data, &[], 2, &cfg).is_err());
        assert!(TrainingBatch::from_examples(&data, &[0], 3, &cfg).is_err());
    }

    #[test]
    fn single_query_equal_scores_is_ln2() {
        let (mut enc, part, cfg, data) = setup(2);
        // zero every parameter: all embeddings vanish, all scores equal
        for g in ParamGroup::ALL {
            enc.param_mut(g).fill(0.0);
        }
        let b = TrainingBatch::from_examples(&data, &[0], 1, &cfg).unwrap();
        let l = batch_loss(&b, &enc, Some(&part), &cfg, LossWeights::default()).unwrap();
        assert!((l.concat - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn training_path_matches_encode() {
        let (enc, part, cfg, data) = setup(3);
        for pruning in [PruningKind::Semi, PruningKind::Full, PruningKind::Mean, PruningKind::Linear] {
            for pooling in [PoolingMode::Full, PoolingMode::UnitWeight, PoolingMode::NoMlm] {
                let c = EncoderConfig { pruning, pooling, ..cfg.clone() };
                let toks = &data.corpus[0];
                let (cls, agg) = embed_tokens(&enc, toks, Some(&part), &c).unwrap();
                let seq = enc.forward(toks).unwrap();
                let e = encode(&seq, &enc.heads(), Some(&part), &c).unwrap();
                let f32s = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
                assert_eq!(e.cls_part, f32s(&cls));
                assert_eq!(e.agg_part, f32s(&agg));
            }
        }
    }

    fn fd_check(cfg: &EncoderConfig, weights: LossWeights, seed: u64) {
        let (enc, part, _, data) = setup(seed);
        let b = TrainingBatch::from_examples(&data, &[0, 1, 2], 2, cfg).unwrap();
        let (_, grads) = gradients(&b, &enc, Some(&part), cfg, weights, Trainable::all()).unwrap();
        let sig = batch_structure(&b, &enc, Some(&part), cfg).unwrap();
        let h = 1e-5;
        for g in ParamGroup::ALL {
            let (mut num, mut ana) = (Vec::new(), Vec::new());
            for k in 0..enc.param(g).len() {
                let mut plus = enc.clone();
                plus.param_mut(g)[k] += h;
                let mut minus = enc.clone();
                minus.param_mut(g)[k] -= h;
                if batch_structure(&b, &plus, Some(&part), cfg).unwrap() != sig
                    || batch_structure(&b, &minus, Some(&part), cfg).unwrap() != sig
                {
                    continue;
                }
                let lp = batch_loss(&b, &plus, Some(&part), cfg, weights).unwrap().total;
                let lm = batch_loss(&b, &minus, Some(&part), cfg, weights).unwrap().total;
                num.push((lp - lm) / (2.0 * h));
                ana.push(grads.get(g)[k]);
            }
            let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let scale = num.iter().map(|a| a * a).sum::<f64>().sqrt().max(ana.iter().map(|a| a * a).sum::<f64>().sqrt());
            assert!(
                scale < 1e-10 || diff / scale < 1e-4,
                "{g:?} {cfg:?}: rel err {}",
                diff / scale
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_for_all_variants() {
        let (_, _, base, _) = setup(0);
        let mut seed = 10;
        for pruning in [PruningKind::Semi, PruningKind::Full, PruningKind::Mean, PruningKind::Linear] {
            for pooling in [PoolingMode::Full, PoolingMode::UnitWeight, PoolingMode::NoMlm] {
                let c = EncoderConfig { pruning, pooling, ..base.clone() };
                fd_check(&c, LossWeights::default(), seed);
                seed += 1;
            }
        }
        let no_cls = EncoderConfig { include_cls: false, ..base.clone() };
        fd_check(&no_cls, LossWeights { lambda1: 0.3, lambda2: 0.0 }, 99);
        let no_bias = EncoderConfig { cls_bias: false, ..base };
        fd_check(&no_bias, LossWeights { lambda1: 0.0, lambda2: 0.0 }, 98);
    }

    #[test]
    fn zero_lambdas_give_concat_gradient_only() {
        let (enc, part, cfg, data) = setup(4);
        let b = TrainingBatch::from_examples(&data, &[0, 1, 2], 2, &cfg).unwrap();
        let w0 = LossWeights { lambda1: 0.0, lambda2: 0.0 };
        let (l, g) = gradients(&b, &enc, Some(&part), &cfg, w0, Trainable::all()).unwrap();
        assert_eq!(l.total, l.concat);
        let (_, g_half) = gradients(&b, &enc, Some(&part), &cfg, LossWeights::default(), Trainable::all()).unwrap();
        assert_ne!(g, g_half);
    }

    #[test]
    fn frozen_groups_get_no_gradient() {
        let (enc, part, cfg, data) = setup(5);
        let b = TrainingBatch::from_examples(&data, &[0, 1], 2, &cfg).unwrap();
        let only = Trainable::only(&[ParamGroup::ClsWeight, ParamGroup::ClsBias]);
        let (_, g) = gradients(&b, &enc, Some(&part), &cfg, LossWeights::default(), only).unwrap();
        for grp in ParamGroup::ALL {
            let nz = g.get(grp).iter().any(|&x| x != 0.0);
            assert_eq!(nz, only.contains(grp), "{grp:?}");
        }
    }

    #[test]
    fn train_determinism_and_zero_lr() {
        let (enc, part, cfg, data) = setup(6);
        let tc = TrainConfig {
            epochs: 2,
            lr: 0.0,
            batch_size: 2,
            negatives: 2,
            ..TrainConfig::default()
        };
        let (same, trace) = train(&data, enc.clone(), Some(&part), &cfg, &tc).unwrap();
        assert_eq!(same, enc);
        assert_eq!(trace.len(), 4);

        let tc = TrainConfig { lr: 0.5, momentum: 0.5, seed: 3, ..tc };
        let (a, ta) = train(&data, enc.clone(), Some(&part), &cfg, &tc).unwrap();
        let (b, tb) = train(&data, enc.clone(), Some(&part), &cfg, &tc).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_ne!(a, enc);

        let capped = TrainConfig { max_steps: Some(7), ..tc };
        assert_eq!(train(&data, enc, Some(&part), &cfg, &capped).unwrap().1.len(), 7);
    }

    #[test]
    fn self_similarity_unchanged_by_signs() {
        let (enc, part, cfg, data) = setup(7);
        let full = EncoderConfig { pruning: PruningKind::Full, ..cfg.clone() };
        let semi = EncoderConfig { pruning: PruningKind::Semi, ..cfg };
        let (_, a) = embed_tokens(&enc, &data.corpus[1], Some(&part), &full).unwrap();
        let (_, b) = embed_tokens(&enc, &data.corpus[1], Some(&part), &semi).unwrap();
        assert_eq!(dot(&a, &a), dot(&b, &b));
    }
}
