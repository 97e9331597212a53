//! Parameter checkpoints in the tensor container.
//!
//! Head tensors: `mlm.weight [d_model × vocab]`, `mlm.bias [vocab]`, and the
//! optional `tw.weight [d_model]`, `tw.bias [1]`, `cls.weight [d_model × d_cls]`,
//! `cls.bias [d_cls]`, `prune.linear [vocab × d_agg]`, `average.proj
//! [d_model × d_agg]`. A toy checkpoint adds the `toy.*` backbone tensors and
//! always carries every head.

use aggretriever_core::encoder::{ClsProjection, EncoderConfig, EncoderHeads, PoolingMode, PruningKind};
use aggretriever_core::lexrep::{MlmHead, TermWeightHead};
use aggretriever_core::toy::{ParamGroup, ToyConfig, ToyEncoder};

use crate::error::FormatError;
use crate::formats::{Tensor, TensorContainer};

pub const AVERAGE_PROJ: &str = "average.proj";

pub fn save_toy(enc: &ToyEncoder) -> TensorContainer {
    let mut c = TensorContainer::new();
    for g in ParamGroup::ALL {
        let dims = enc.shape(g).into_iter().map(|d| d as u64).collect();
        let data = enc.param(g).iter().map(|&x| x as f32).collect();
        c.push(Tensor::new(g.name(), dims, data).expect("shape matches parameter"))
            .expect("group names are unique");
    }
    c
}

fn dim(c: &TensorContainer, g: ParamGroup, axis: usize) -> Result<usize, FormatError> {
    let t = c.require(g.name())?;
    t.dims.get(axis).map(|&d| d as usize).ok_or_else(|| FormatError::BadShape {
        name: t.name.clone(),
        expected: format!("rank > {axis}"),
        found: t.dims.clone(),
    })
}

/// Rebuilds a toy encoder; its configuration is read off the tensor shapes.
pub fn load_toy(c: &TensorContainer) -> Result<ToyEncoder, FormatError> {
    let config = ToyConfig {
        vocab: dim(c, ParamGroup::TokenEmbedding, 0)?,
        d_model: dim(c, ParamGroup::TokenEmbedding, 1)?,
        max_len: dim(c, ParamGroup::PositionEmbedding, 0)?,
        d_cls: dim(c, ParamGroup::ClsWeight, 1)?,
        d_agg: dim(c, ParamGroup::LinearPrune, 1)?,
        ..ToyConfig::default()
    };
    let mut enc = ToyEncoder::new(config).map_err(|e| FormatError::Invalid {
        format: "toy checkpoint",
        detail: e.to_string(),
    })?;
    for g in ParamGroup::ALL {
        let t = c.require(g.name())?;
        let want: Vec<u64> = enc.shape(g).into_iter().map(|d| d as u64).collect();
        if t.dims != want {
            return Err(FormatError::BadShape {
                name: t.name.clone(),
                expected: format!("{want:?}"),
                found: t.dims.clone(),
            });
        }
        for (p, &x) in enc.param_mut(g).iter_mut().zip(&t.data) {
            *p = f64::from(x);
        }
    }
    Ok(enc)
}

fn missing_for(name: &str, why: &str) -> FormatError {
    FormatError::Invalid {
        format: "head checkpoint",
        detail: format!("tensor `{name}` is required {why}"),
    }
}

/// Loads the heads `cfg` needs; tensors it does not use may be absent.
pub fn load_heads(c: &TensorContainer, cfg: &EncoderConfig) -> Result<EncoderHeads, FormatError> {
    let w = c.require("mlm.weight")?.to_matrix(None, None)?;
    let (d_model, vocab) = (w.rows(), w.cols());
    let b = c.require("mlm.bias")?.to_vector(Some(vocab))?;
    let mlm = MlmHead::new(w, b).map_err(core_err)?;

    let lexical = cfg.d_agg > 0 && cfg.pooling.lexical().is_some();
    let term_weight = match (c.get("tw.weight"), c.get("tw.bias")) {
        (Some(w), Some(b)) => {
            let b = b.to_vector(Some(1))?;
            TermWeightHead::new(w.to_vector(Some(d_model))?, b[0]).map_err(core_err)?
        }
        _ if lexical && cfg.pooling == PoolingMode::Full => {
            return Err(missing_for("tw.weight/tw.bias", "for full pooling"));
        }
        _ => TermWeightHead::unit(d_model),
    };

    let cls = match c.get("cls.weight") {
        Some(t) => {
            let w = t.to_matrix(Some(d_model), None)?;
            let bias = match c.get("cls.bias") {
                Some(b) => b.to_vector(Some(w.cols()))?,
                None if cfg.cls_bias && cfg.cls_dim() > 0 => return Err(missing_for("cls.bias", "when cls_bias is set")),
                None => vec![0.0; w.cols()],
            };
            Some(ClsProjection::new(w, bias).map_err(core_err)?)
        }
        None if cfg.cls_dim() > 0 => return Err(missing_for("cls.weight", "when the [CLS] part is included")),
        None => None,
    };

    let linear_prune = match c.get("prune.linear") {
        Some(t) => Some(t.to_matrix(Some(vocab), None)?),
        None if lexical && cfg.pruning == PruningKind::Linear => {
            return Err(missing_for("prune.linear", "for linear pruning"));
        }
        None => None,
    };
    let average_proj = match c.get(AVERAGE_PROJ) {
        Some(t) => Some(t.to_matrix(Some(d_model), None)?),
        None if cfg.d_agg > 0 && cfg.pooling == PoolingMode::Average => {
            return Err(missing_for(AVERAGE_PROJ, "for average pooling"));
        }
        None => None,
    };
    Ok(EncoderHeads {
        mlm,
        term_weight,
        cls,
        linear_prune,
        average_proj,
    })
}

fn core_err(e: aggretriever_core::Error) -> FormatError {
    FormatError::Invalid {
        format: "head checkpoint",
        detail: e.to_string(),
    }
}
