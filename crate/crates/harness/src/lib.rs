//! Std side of the figurative QA harness: dataset and review file IO, the
//! cached LLM gateway, the answering strategies, synthetic data emission,
//! the annotation service and report rendering.
//!
//! Pure logic (schema, prompts, parsing, statistics) lives in
//! [`figqa_core`], re-exported here as [`core`].

pub use figqa_core as core;

pub mod annotation;
pub mod config;
pub mod finetune;
pub mod gateway;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod selftest;
