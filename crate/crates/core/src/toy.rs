//! A deliberately small trainable encoder for desk-scale experiments.
//!
//! ```text
//! x_i   = tok[t_i] + pos[i]
//! ctx   = mean_i x_i
//! u_i   = tanh(x_i · A + ctx · B + c)
//! h_i   = u_i / rms(u_i)                     contextualized token i
//! h_cls = same, with the cls vector as x     sequence summary
//! rms(u) = sqrt(mean_j u_j² + NORM_EPS)
//! ```
//!
//! `A` mixes position-sensitive token inputs, `B` lets every position see the
//! whole sequence. The parameter-free RMS normalization keeps outputs at unit
//! scale regardless of the initialization scale, as the final normalization of
//! a real backbone does; without it a small-init toy starts with flat token
//! distributions and contrastive training cannot break the symmetry. The MLM
//! head, term weight head and `[CLS]` projection sit on top exactly as they
//! would on a real backbone.

use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::{ClsProjection, EncoderHeads};
use crate::lexrep::{MlmHead, TermWeightHead, TokenEmbeddingSequence};
use crate::linalg::Matrix;
use crate::rng::Xorshift64Star;
use crate::{Error, Result};

/// Stabilizer inside the RMS normalization.
pub const NORM_EPS: f64 = 1e-6;

/// `u / sqrt(mean(u²) + NORM_EPS)` and the divisor.
pub(crate) fn rms_normalize(u: &[f64]) -> (Vec<f64>, f64) {
    let ms = u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64;
    let r = libm::sqrt(ms + NORM_EPS);
    (u.iter().map(|x| x / r).collect(), r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub vocab: usize,
    pub d_model: usize,
    pub max_len: usize,
    pub d_cls: usize,
    pub d_agg: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            vocab: 128,
            d_model: 16,
            max_len: 32,
            d_cls: 8,
            d_agg: 32,
            init_scale: 0.05,
            seed: 0,
        }
    }
}

/// Named parameter tensors, in checkpoint order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    TokenEmbedding,
    PositionEmbedding,
    ClsToken,
    MixToken,
    MixContext,
    MixBias,
    MlmWeight,
    MlmBias,
    TermWeight,
    TermBias,
    ClsWeight,
    ClsBias,
    LinearPrune,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 13] = [
        ParamGroup::TokenEmbedding,
        ParamGroup::PositionEmbedding,
        ParamGroup::ClsToken,
        ParamGroup::MixToken,
        ParamGroup::MixContext,
        ParamGroup::MixBias,
        ParamGroup::MlmWeight,
        ParamGroup::MlmBias,
        ParamGroup::TermWeight,
        ParamGroup::TermBias,
        ParamGroup::ClsWeight,
        ParamGroup::ClsBias,
        ParamGroup::LinearPrune,
    ];

    /// Tensor name used in checkpoints.
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::TokenEmbedding => "toy.token_embedding",
            ParamGroup::PositionEmbedding => "toy.position_embedding",
            ParamGroup::ClsToken => "toy.cls_token",
            ParamGroup::MixToken => "toy.mix_token",
            ParamGroup::MixContext => "toy.mix_context",
            ParamGroup::MixBias => "toy.mix_bias",
            ParamGroup::MlmWeight => "mlm.weight",
            ParamGroup::MlmBias => "mlm.bias",
            ParamGroup::TermWeight => "tw.weight",
            ParamGroup::TermBias => "tw.bias",
            ParamGroup::ClsWeight => "cls.weight",
            ParamGroup::ClsBias => "cls.bias",
            ParamGroup::LinearPrune => "prune.linear",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == name)
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    pub config: ToyConfig,
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub cls_token: Vec<f64>,
    pub mix_token: Matrix,
    pub mix_context: Matrix,
    pub mix_bias: Vec<f64>,
    pub mlm_head: MlmHead,
    pub tw_head: TermWeightHead,
    pub cls_proj: ClsProjection,
    pub linear_prune: Matrix,
}

impl ToyEncoder {
    /// Seeded uniform initialization in `[-init_scale, init_scale]`, groups
    /// filled in checkpoint order.
    pub fn new(config: ToyConfig) -> Result<Self> {
        if config.vocab == 0 || config.d_model == 0 || config.max_len == 0 {
            return Err(Error::invalid("toy encoder dimensions must be positive"));
        }
        if config.d_cls == 0 || config.d_agg == 0 {
            return Err(Error::invalid("toy encoder needs d_cls >= 1 and d_agg >= 1"));
        }
        let (v, d) = (config.vocab, config.d_model);
        let mut enc = Self {
            token_embedding: Matrix::zeros(v, d),
            position_embedding: Matrix::zeros(config.max_len, d),
            cls_token: vec![0.0; d],
            mix_token: Matrix::zeros(d, d),
            mix_context: Matrix::zeros(d, d),
            mix_bias: vec![0.0; d],
            mlm_head: MlmHead::new(Matrix::zeros(d, v), vec![0.0; v])?,
            tw_head: TermWeightHead::new(vec![0.0; d], 0.0)?,
            cls_proj: ClsProjection::new(Matrix::zeros(d, config.d_cls), vec![0.0; config.d_cls])?,
            linear_prune: Matrix::zeros(v, config.d_agg),
            config,
        };
        let mut rng = Xorshift64Star::new(enc.config.seed);
        let s = enc.config.init_scale;
        for g in ParamGroup::ALL {
            for x in enc.param_mut(g) {
                *x = rng.uniform(-s, s);
            }
        }
        Ok(enc)
    }

    pub fn param(&self, g: ParamGroup) -> &[f64] {
        match g {
            ParamGroup::TokenEmbedding => self.token_embedding.as_slice(),
            ParamGroup::PositionEmbedding => self.position_embedding.as_slice(),
            ParamGroup::ClsToken => &self.cls_token,
            ParamGroup::MixToken => self.mix_token.as_slice(),
            ParamGroup::MixContext => self.mix_context.as_slice(),
            ParamGroup::MixBias => &self.mix_bias,
            ParamGroup::MlmWeight => self.mlm_head.weight.as_slice(),
            ParamGroup::MlmBias => &self.mlm_head.bias,
            ParamGroup::TermWeight => &self.tw_head.weight,
            ParamGroup::TermBias => core::slice::from_ref(&self.tw_head.bias),
            ParamGroup::ClsWeight => self.cls_proj.weight.as_slice(),
            ParamGroup::ClsBias => &self.cls_proj.bias,
            ParamGroup::LinearPrune => self.linear_prune.as_slice(),
        }
    }

    pub fn param_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        match g {
            ParamGroup::TokenEmbedding => self.token_embedding.as_mut_slice(),
            ParamGroup::PositionEmbedding => self.position_embedding.as_mut_slice(),
            ParamGroup::ClsToken => &mut self.cls_token,
            ParamGroup::MixToken => self.mix_token.as_mut_slice(),
            ParamGroup::MixContext => self.mix_context.as_mut_slice(),
            ParamGroup::MixBias => &mut self.mix_bias,
            ParamGroup::MlmWeight => self.mlm_head.weight.as_mut_slice(),
            ParamGroup::MlmBias => &mut self.mlm_head.bias,
            ParamGroup::TermWeight => &mut self.tw_head.weight,
            ParamGroup::TermBias => core::slice::from_mut(&mut self.tw_head.bias),
            ParamGroup::ClsWeight => self.cls_proj.weight.as_mut_slice(),
            ParamGroup::ClsBias => &mut self.cls_proj.bias,
            ParamGroup::LinearPrune => self.linear_prune.as_mut_slice(),
        }
    }

    /// Row-major shape of a parameter group.
    pub fn shape(&self, g: ParamGroup) -> Vec<usize> {
        let c = &self.config;
        match g {
            ParamGroup::TokenEmbedding => vec![c.vocab, c.d_model],
            ParamGroup::PositionEmbedding => vec![c.max_len, c.d_model],
            ParamGroup::ClsToken | ParamGroup::MixBias | ParamGroup::TermWeight => vec![c.d_model],
            ParamGroup::MixToken | ParamGroup::MixContext => vec![c.d_model, c.d_model],
            ParamGroup::MlmWeight => vec![c.d_model, c.vocab],
            ParamGroup::MlmBias => vec![c.vocab],
            ParamGroup::TermBias => vec![1],
            ParamGroup::ClsWeight => vec![c.d_model, c.d_cls],
            ParamGroup::ClsBias => vec![c.d_cls],
            ParamGroup::LinearPrune => vec![c.vocab, c.d_agg],
        }
    }

    pub fn param_count(&self) -> usize {
        ParamGroup::ALL.iter().map(|&g| self.param(g).len()).sum()
    }

    /// Heads in the form [`crate::encoder::encode`] consumes.
    pub fn heads(&self) -> EncoderHeads {
        EncoderHeads {
            mlm: self.mlm_head.clone(),
            term_weight: self.tw_head.clone(),
            cls: Some(self.cls_proj.clone()),
            linear_prune: Some(self.linear_prune.clone()),
            average_proj: None,
        }
    }

    pub(crate) fn check_tokens(&self, token_ids: &[u32]) -> Result<()> {
        if token_ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        if token_ids.len() > self.config.max_len {
            return Err(Error::invalid("sequence longer than the toy encoder's max_len"));
        }
        if let Some(&t) = token_ids.iter().find(|&&t| t as usize >= self.config.vocab) {
            return Err(Error::TokenOutOfRange {
                token: t,
                vocab_size: self.config.vocab,
            });
        }
        Ok(())
    }

    /// Forward pass with intermediates kept for backpropagation.
    pub(crate) fn forward_cached(&self, token_ids: &[u32]) -> Result<ToyActivations> {
        self.check_tokens(token_ids)?;
        let d = self.config.d_model;
        let len = token_ids.len();
        let mut x = Matrix::zeros(len, d);
        let mut ctx = vec![0.0; d];
        for (i, &t) in token_ids.iter().enumerate() {
            let row = x.row_mut(i);
            for ((r, a), b) in row
                .iter_mut()
                .zip(self.token_embedding.row(t as usize))
                .zip(self.position_embedding.row(i))
            {
                *r = a + b;
            }
            for (c, r) in ctx.iter_mut().zip(x.row(i)) {
                *c += r;
            }
        }
        for c in &mut ctx {
            *c /= len as f64;
        }
        let mut shared = self.mix_bias.clone();
        self.mix_context.vec_mul_into(&ctx, &mut shared);

        let mix = |input: &[f64]| -> (Vec<f64>, Vec<f64>, f64) {
            let mut pre = shared.clone();
            self.mix_token.vec_mul_into(input, &mut pre);
            let u: Vec<f64> = pre.iter().map(|&z| libm::tanh(z)).collect();
            let (h, r) = rms_normalize(&u);
            (u, h, r)
        };
        let mut u = Matrix::zeros(len, d);
        let mut h = Matrix::zeros(len, d);
        let mut rms = Vec::with_capacity(len);
        for i in 0..len {
            let (ui, hi, r) = mix(x.row(i));
            u.row_mut(i).copy_from_slice(&ui);
            h.row_mut(i).copy_from_slice(&hi);
            rms.push(r);
        }
        let (cls_u, cls_h, cls_rms) = mix(&self.cls_token);
        Ok(ToyActivations {
            x,
            ctx,
            u,
            h,
            rms,
            cls_u,
            cls_h,
            cls_rms,
        })
    }

    /// Contextualized embeddings plus `[CLS]` summary. No position is special.
    pub fn forward(&self, token_ids: &[u32]) -> Result<TokenEmbeddingSequence> {
        let act = self.forward_cached(token_ids)?;
        TokenEmbeddingSequence::new(act.h, token_ids.to_vec(), vec![false; token_ids.len()], act.cls_h)
    }
}

pub(crate) struct ToyActivations {
    pub x: Matrix,
    pub ctx: Vec<f64>,
    /// tanh outputs before normalization
    pub u: Matrix,
    pub h: Matrix,
    pub rms: Vec<f64>,
    pub cls_u: Vec<f64>,
    pub cls_h: Vec<f64>,
    pub cls_rms: f64,
}

/// Free-function form of [`ToyEncoder::forward`].
pub fn toy_forward(enc: &ToyEncoder, token_ids: &[u32]) -> Result<TokenEmbeddingSequence> {
    enc.forward(token_ids)
}
