//! Allocation-only core of the augforge engine.
//!
//! Everything here is pure computation over in-memory records: corpus
//! validation, meaningful-noun extraction, reasonable-pair composition,
//! embedding relevance, rule-based initial answers, reference teachers,
//! multi-teacher answer fusion and VQA metrics. File formats, the staged
//! pipeline and the CLI live in the `augforge` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod compose;
pub mod corpus;
pub mod dist;
pub mod embedding;
mod error;
pub mod initial;
pub mod kd;
pub mod metrics;
pub mod nouns;
pub mod relevance;
pub mod teacher;

pub use error::{Error, Result};

/// Identifier of an image, as used by the VQA annotation files.
pub type ImageId = u64;
/// Identifier of a question, as used by the VQA annotation files.
pub type QuestionId = u64;
/// Dense index into an [`dist::AnswerVocab`].
pub type AnswerId = u32;
