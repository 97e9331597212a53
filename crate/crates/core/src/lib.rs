//! Lexical aggregation for dense passage retrieval.
//!
//! Contextualized token embeddings are projected through a masked-language-model
//! head into vocabulary space, max-pooled into a single lexical vector, pruned
//! to a handful of dimensions by signed slice max pooling, and concatenated with
//! a projected `[CLS]` vector. The resulting vectors are scored by plain inner
//! product, so they drop straight into a flat index.
//!
//! ```text
//!  tokens ─▶ e_i ─▶ softmax(e_i·W + b) ─▶ max_i w_i·p_i ─▶ v (|V|)
//!                                                         │
//!                            slice max pool + sign halves ▼
//!  [CLS] ─▶ linear ─▶ cls (d_cls)  ⊕  agg* (d_agg)  ─▶  index / search
//! ```
//!
//! This crate is `no_std` and only needs `alloc`. File formats, thread pools and
//! the command-line interface live in the `aggretriever` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod encoder;
mod error;
pub mod eval;
pub mod index;
pub mod lexrep;
pub mod linalg;
pub mod pretrain;
pub mod pruning;
pub mod rng;
pub mod synth;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
