//! Conversation disentanglement for IRC-style chat logs.
//!
//! Messages are paired with their preceding context, encoded by a small
//! transformer, aggregated across the window by a bidirectional LSTM and
//! scored by a heuristic matching classifier. Predicted reply-to links are
//! turned into conversations and scored against gold annotations.

pub mod autograd;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod synth;
pub mod inference;
pub mod metrics;
pub mod ranker;
pub mod tensor;

pub use error::{Error, Result};
