//! Multi-sentence video description at several levels of detail.
//!
//! Per-segment classifier scores go through a fully connected CRF with a
//! video-level topic node, the decoded semantic representations are ranked
//! by topic-specific tf-idf relevance, and each selected segment is
//! translated to English by a phrase-based decoder running over a word
//! lattice built from the CRF marginals. A rule-based pass then turns the
//! sentences into a cohesive paragraph.

pub mod bleu;
pub mod cohesion;
pub mod crf;
pub mod data;
pub mod decoder;
pub mod error;
pub mod fixtures;
pub mod inference;
pub mod lattice;
pub mod pipeline;
pub mod relevance;
pub mod schema;
pub mod segmentation;
pub mod synth;
pub mod training;
pub mod translation;
pub mod tuning;

pub use error::{Error, Result};
