//! Encoder configuration as JSON. Field names follow `EncoderConfig`; every
//! field is optional and falls back to the base configuration.

use std::path::Path;

use aggretriever_core::encoder::{EncoderConfig, PoolingMode, PruningKind};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, Error, FormatError, Result};

const FORMAT: &str = "config file";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Pooling {
    Full,
    UnitWeight,
    NoMlm,
    Average,
    RepBert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pruning {
    Semi,
    Full,
    Linear,
    Mean,
}

impl From<Pooling> for PoolingMode {
    fn from(p: Pooling) -> Self {
        match p {
            Pooling::Full => PoolingMode::Full,
            Pooling::UnitWeight => PoolingMode::UnitWeight,
            Pooling::NoMlm => PoolingMode::NoMlm,
            Pooling::Average => PoolingMode::Average,
            Pooling::RepBert => PoolingMode::RepBert,
        }
    }
}

impl From<PoolingMode> for Pooling {
    fn from(p: PoolingMode) -> Self {
        match p {
            PoolingMode::Full => Pooling::Full,
            PoolingMode::UnitWeight => Pooling::UnitWeight,
            PoolingMode::NoMlm => Pooling::NoMlm,
            PoolingMode::Average => Pooling::Average,
            PoolingMode::RepBert => Pooling::RepBert,
        }
    }
}

impl From<Pruning> for PruningKind {
    fn from(p: Pruning) -> Self {
        match p {
            Pruning::Semi => PruningKind::Semi,
            Pruning::Full => PruningKind::Full,
            Pruning::Linear => PruningKind::Linear,
            Pruning::Mean => PruningKind::Mean,
        }
    }
}

impl From<PruningKind> for Pruning {
    fn from(p: PruningKind) -> Self {
        match p {
            PruningKind::Semi => Pruning::Semi,
            PruningKind::Full => Pruning::Full,
            PruningKind::Linear => Pruning::Linear,
            PruningKind::Mean => Pruning::Mean,
        }
    }
}

/// Partial configuration; `None` leaves the base value alone.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_cls: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_agg: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_query_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_passage_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooling: Option<Pooling>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruning: Option<Pruning>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_cls: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cls_bias: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_token: Option<u32>,
}

impl ConfigOverrides {
    pub fn from_json(text: &str) -> std::result::Result<Self, FormatError> {
        serde_json::from_str(text).map_err(|e| FormatError::Invalid {
            format: FORMAT,
            detail: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?).map_err(|e| Error::format(path, e))
    }

    /// The complete form of `cfg`.
    pub fn full(cfg: &EncoderConfig) -> Self {
        Self {
            d_cls: Some(cfg.d_cls),
            d_agg: Some(cfg.d_agg),
            max_query_len: Some(cfg.max_query_len),
            max_passage_len: Some(cfg.max_passage_len),
            pooling: Some(cfg.pooling.into()),
            pruning: Some(cfg.pruning.into()),
            include_cls: Some(cfg.include_cls),
            cls_bias: Some(cfg.cls_bias),
            pool_token: cfg.pool_token,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    /// Values set in `later` win.
    pub fn merge(self, later: &ConfigOverrides) -> Self {
        Self {
            d_cls: later.d_cls.or(self.d_cls),
            d_agg: later.d_agg.or(self.d_agg),
            max_query_len: later.max_query_len.or(self.max_query_len),
            max_passage_len: later.max_passage_len.or(self.max_passage_len),
            pooling: later.pooling.or(self.pooling),
            pruning: later.pruning.or(self.pruning),
            include_cls: later.include_cls.or(self.include_cls),
            cls_bias: later.cls_bias.or(self.cls_bias),
            pool_token: later.pool_token.or(self.pool_token),
        }
    }

    pub fn apply(&self, mut cfg: EncoderConfig) -> EncoderConfig {
        if let Some(x) = self.d_cls {
            cfg.d_cls = x;
        }
        if let Some(x) = self.d_agg {
            cfg.d_agg = x;
        }
        if let Some(x) = self.max_query_len {
            cfg.max_query_len = x;
        }
        if let Some(x) = self.max_passage_len {
            cfg.max_passage_len = x;
        }
        if let Some(x) = self.pooling {
            cfg.pooling = x.into();
        }
        if let Some(x) = self.pruning {
            cfg.pruning = x.into();
        }
        if let Some(x) = self.include_cls {
            cfg.include_cls = x;
        }
        if let Some(x) = self.cls_bias {
            cfg.cls_bias = x;
        }
        if self.pool_token.is_some() {
            cfg.pool_token = self.pool_token;
        }
        cfg
    }
}
