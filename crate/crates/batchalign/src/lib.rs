//! Batch-aligned preference finetuning at desk scale.
//!
//! The crate builds language-parallel RAG probe datasets, composes
//! language-coupled (or shuffled baseline) training batches, finetunes a
//! small autoregressive policy with DPO or ORPO, and evaluates cross-lingual
//! consistency with bootstrap confidence intervals, exact McNemar tests,
//! perplexity deltas, and error co-occurrence.

pub mod config;
pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod manifest;
pub mod objectives;
pub mod pipeline;
pub mod policy;
pub mod prompting;
pub mod rng;
pub mod sampler;
