//! Core of the figurative-language QA harness.
//!
//! Everything here is pure and allocation-only: the corpus schema and its
//! filters, byte-exact prompt rendering, model-output parsing, cache-key
//! canonicalization and the statistics used to compare answering
//! strategies. File IO, networking and the CLI live in the `figqa` crate.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod corpus;
pub mod digest;
pub mod parse;
pub mod prompts;
pub mod request;
pub mod run;
pub mod stats;

pub use corpus::{
    Answer, CandidateContext, CorpusError, Dataset, FigurativenessScore, QAInstance, Source, Split,
};
pub use request::{CacheKey, CompletionRequest, Message, ModelSpec, Role, WireFormat};
pub use run::{Predicted, Prediction, RunRecord, Strategy, StrategyConfig};
