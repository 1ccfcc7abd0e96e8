//! Uncertainty features for machine-translation quality estimation.
//!
//! The crate computes model-confidence, dropout, corpus-coverage, noised-input
//! and masked-LM features for (source, translation) pairs, fuses them with
//! frozen sentence embeddings in a ridge regression head, and runs the
//! per-feature and top-k evaluation protocols.
//!
//! Model access goes through [`backend::ModelBackend`]; a deterministic
//! synthetic world ([`backend::SyntheticBackend`]) stands in for real NMT
//! systems and a file backend replays precomputed outputs.

pub mod backend;
pub mod cli;
pub mod config;
pub mod corpus_index;
pub mod error;
pub mod evidence;
pub mod features;
pub mod fusion;
pub mod harness;
pub mod noiser;
pub mod records;
pub mod rng;
pub mod stats;
pub mod textmetrics;

pub use error::{Error, Result};
