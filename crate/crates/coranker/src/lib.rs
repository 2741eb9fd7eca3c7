//! Collaborative passage reranking engine.
//!
//! A small listwise model pre-ranks a deep candidate list with a sliding
//! window, an order adjuster reshapes the condensed top slice to suit the
//! large model, and the large listwise model makes one final call. The
//! crate provides the ranking core, sliding-window execution, prompt
//! rendering and output repair, pluggable backends (remote endpoints and
//! deterministic simulators), strategy comparison with exact call
//! accounting, and the two training-data factories built on top.
//!
//! Entry points: [`pipeline::run_strategy`] and
//! [`pipeline::compare_strategies`] for ranking,
//! [`datagen::hrc_build`] and [`datagen::s3_build`] for data generation.

pub mod backends;
pub mod core;
pub mod datagen;
pub mod defaults;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod seeding;
pub mod windowing;

pub use crate::core::{
    apply_ranking, validate_ranking, CandidateList, Passage, Qrels, Query, Ranking,
};
