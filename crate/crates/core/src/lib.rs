//! Zero-shot video question answering with grounded self-verification.
//!
//! A question about a video goes through three stages:
//!
//! 1. a first-sight pass where a VideoLLM proposes an answer with reasoning,
//!    captions the video's scenes and names the objects worth tracking;
//! 2. open-vocabulary detection of those objects, consolidated into
//!    per-object appearance timelines;
//! 3. a judge that compares the reasoning with both groundings and, when
//!    they disagree, asks timeframed clarification questions on trimmed
//!    windows before settling on a refined answer.
//!
//! Every external call goes through [`backends`], which can record calls to
//! a transcript directory and replay them offline.

pub mod analyzer;
pub mod backends;
pub mod bench;
pub mod cli;
pub mod config;
pub mod grounding;
pub mod judge;
pub mod pipeline;
pub mod prompts;
pub mod question;
pub mod time;

pub use config::EngineConfig;
pub use pipeline::{run_question, run_question_at, RunRecord, Stage, StageFailure};
pub use question::{FinalAnswer, Provenance, QuestionSpec};
