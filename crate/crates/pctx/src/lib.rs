//! Personalized context-aware action tokenizer and a desk-scale
//! generative-retrieval harness.
//!
//! The pipeline turns interaction logs plus item feature embeddings into
//! per-item sets of personalized semantic IDs, tokenizes sequences with
//! context-matched IDs and probabilistic augmentation, and evaluates
//! next-item generation with beam search and multi-facet probability
//! aggregation.
//!
//! Stages, in order: [`ingest`] -> [`context`] -> [`condense`] ->
//! [`quantize`] -> [`registry`] -> [`tokenize`] -> [`gr`] -> [`eval`];
//! [`pipeline`] wires them together.

pub mod condense;
pub mod config;
pub mod context;
pub mod embed;
pub mod error;
pub mod eval;
pub mod gr;
pub mod ingest;
pub mod kmeans;
pub mod pipeline;
pub mod quantize;
pub mod registry;
pub mod seeds;
pub mod tokenize;
pub mod types;

pub use config::{PipelineConfig, TokenizerMode};
pub use error::{Error, Result};
pub use types::{ItemId, Occurrence, SemanticId};
