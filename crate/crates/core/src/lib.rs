//! Noise-robust few-shot classification over frozen image/text embeddings.
//!
//! The pipeline: fuse class text embeddings ([`prompt_fusion`]), adapt image
//! features with a residual adapter ([`adapter`]), turn each noisy label into
//! rank-aware soft targets over the top-K classes ([`label_weighting`]), and
//! train on the weighted multi-label loss ([`objective`], [`trainer`]).
//!
//! Noise models, target weightings and base losses are strategies looked up by
//! name in [`registry::Registry`] instances.

pub mod adapter;
pub mod embedding_store;
pub mod error;
pub mod gradcheck;
pub mod label_weighting;
pub mod objective;
pub mod prompt_fusion;
pub mod registry;
pub mod trainer;

pub use error::{CrofError, Result};
