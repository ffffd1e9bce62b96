//! Discourse-driven explanation planning for lay summarization.
//!
//! The crate covers the offline half of the pipeline: locating explanatory
//! content in reference summaries (from RST parses or signal-word rules),
//! turning it into ordered question plans, writing plan-augmented training
//! data, prompting a chat-completion model, and scoring summaries.

pub mod consistency;
pub mod dataset;
pub mod error;
pub mod llm;
pub mod metrics;
pub mod par;
pub mod plan;
pub mod prompts;
pub mod rst;
pub mod rules;
pub mod segment;

pub use error::{Error, Result};

/// Hex SHA-256 of a value's JSON form; identifies configurations in logs
/// and reports.
pub fn fingerprint<T: serde::Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(value).expect("configuration serializes");
    hex::encode(Sha256::digest(json))
}
