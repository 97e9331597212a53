//! Unsupervised warm start for the toy encoder's MLM head.
//!
//! A real backbone arrives with a pretrained masked-language-model head whose
//! token distributions already concentrate on the observed term and its
//! neighbours; that lexical prior is what makes MLM-based pooling useful. A
//! freshly seeded toy has none, so this stage trains it to reconstruct every
//! input token (mean cross-entropy of `p_i` against `t_i`) on unlabeled text.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{axpy, log_sum_exp, softmax_in_place, Matrix};
use crate::rng::Xorshift64Star;
use crate::toy::{ParamGroup, ToyEncoder};
use crate::training::{backbone_backward, Gradients, Sgd, Trainable};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 16,
            lr: 0.5,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Groups the reconstruction loss depends on.
pub fn pretrain_groups() -> Trainable {
    Trainable::only(&[
        ParamGroup::TokenEmbedding,
        ParamGroup::PositionEmbedding,
        ParamGroup::MixToken,
        ParamGroup::MixContext,
        ParamGroup::MixBias,
        ParamGroup::MlmWeight,
        ParamGroup::MlmBias,
    ])
}

/// Mean token-reconstruction loss over every position of `seqs`, with
/// gradients.
pub fn reconstruction_gradients(enc: &ToyEncoder, seqs: &[&[u32]]) -> Result<(f64, Gradients)> {
    let positions: usize = seqs.iter().map(|s| s.len()).sum();
    if positions == 0 {
        return Err(Error::EmptyBatch);
    }
    let scale = 1.0 / positions as f64;
    let vocab = enc.config.vocab;
    let mut grads = Gradients::zeros_like(enc);
    let mut loss = 0.0;
    let mut logits = vec![0.0; vocab];
    for tokens in seqs {
        let act = enc.forward_cached(tokens)?;
        let mut dh = Matrix::zeros(tokens.len(), enc.config.d_model);
        for (i, &t) in tokens.iter().enumerate() {
            let h = act.h.row(i);
            enc.mlm_head.logits_into(h, &mut logits);
            loss += log_sum_exp(&logits) - logits[t as usize];
            softmax_in_place(&mut logits);
            logits[t as usize] -= 1.0;
            for g in logits.iter_mut() {
                *g *= scale;
            }
            // logits now hold ∂loss/∂logit
            let wbuf = grads.buf(ParamGroup::MlmWeight);
            for (r, &hr) in h.iter().enumerate() {
                axpy(hr, &logits, &mut wbuf[r * vocab..(r + 1) * vocab]);
            }
            axpy(1.0, &logits, grads.buf(ParamGroup::MlmBias));
            dh.row_mut(i).copy_from_slice(&enc.mlm_head.weight.mul_vec(&logits));
        }
        backbone_backward(&act, tokens, &dh, &vec![0.0; enc.config.d_model], enc, &mut grads);
    }
    Ok((loss * scale, grads))
}

/// Minibatch SGD on the reconstruction loss; returns the encoder and the
/// per-step loss.
pub fn pretrain_mlm(corpus: &[Vec<u32>], mut enc: ToyEncoder, cfg: &PretrainConfig) -> Result<(ToyEncoder, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(Error::invalid("pretraining corpus is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let max_len = enc.config.max_len;
    let trainable = pretrain_groups();
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut epoch = 0u64;
    while trace.len() < cfg.steps {
        Xorshift64Star::derived(cfg.seed, epoch).shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            if trace.len() >= cfg.steps {
                break;
            }
            let seqs: Vec<&[u32]> = chunk
                .iter()
                .map(|&i| &corpus[i][..corpus[i].len().min(max_len)])
                .collect();
            let (loss, grads) = reconstruction_gradients(&enc, &seqs)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("pretraining loss"));
            }
            opt.step(&mut enc, &grads, trainable);
            trace.push(loss);
        }
        epoch += 1;
    }
    Ok((enc, trace))
}
