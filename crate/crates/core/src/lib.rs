//! Sequential recommendation toolkit with content-anchored item embeddings.
//!
//! The crate is organized around the experiment pipeline: `data` ingests and
//! splits interaction logs, `numerics` provides tensors with reverse-mode
//! differentiation, `embeddings` holds the item representation variants,
//! `model` is a causal transformer trained with full cross-entropy, and
//! `eval` computes ranking metrics with cold/warm segmentation.

pub mod data;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
