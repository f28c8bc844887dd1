//! Caption-grounded training-set synthesis.
//!
//! The crate is split along the data flow:
//!
//! - [`dataman`]: JSONL dataset manifests and seed derivation.
//! - [`promptkit`]: basic / caption-in-prompt templates and LLM-rewrite text handling.
//! - [`backends`]: captioning, text-to-image and rewrite clients, wire protocol and replay store.
//! - [`synthworld`]: a closed-form toy universe with a captioner and a conditional generator.
//! - [`trainer`]: desk-scale SGD classifiers and 0-1 risk evaluation.
//! - [`theory`]: prompt-induced distributions, density distances and the risk-bound check.
//! - [`pipeline`]: end-to-end orchestration, sweeps, reports and published reference numbers.

pub mod backends;
pub mod dataman;
pub mod pipeline;
pub mod promptkit;
pub mod synthworld;
pub mod theory;
pub mod trainer;
