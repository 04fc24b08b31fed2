//! Online supervised continual learning with chunked, KV-cached
//! transformers and replay streams.
//!
//! The crate trains a small decoder-style transformer directly on a
//! non-stationary example sequence, one chunk at a time, and scores it
//! prequentially: every example is predicted before the model trains on
//! it, and the summed next-step log-loss plus the average online accuracy
//! are the quantities of interest.
//!
//! Module map:
//! - [`numerics`] - flat-tensor math, reverse-mode differentiation, AdamW.
//! - [`model`] - the two sequence models (privileged-label and 2-token),
//!   multi-query attention, the sliding-window KV-cache.
//! - [`data`] - deterministic example readers: Gaussian-blob base sets,
//!   piecewise-stationary task sequences, binary feature files.
//! - [`streams`] - the replay-streams online trainer.
//! - [`eval`] - prequential metrics, curve aggregation, the recent-window
//!   baseline, MAC accounting, ablations.
//! - [`cli`] - experiment configs, run/sweep orchestration, output files.

pub mod cli;
pub mod data;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod streams;
pub mod testutil;
