//! Network clients behind the core traits: an OpenAI-compatible chat
//! completion backend, a Wikipedia search-and-extract retriever, and a JSON
//! entailment scorer.

mod chat;
mod nli;
mod wiki;

pub use chat::ChatClient;
pub use nli::HttpEntailment;
pub use wiki::{WikipediaRetriever, DEFAULT_API as WIKIPEDIA_API};

/// Every client identifies itself; Wikipedia rejects anonymous agents.
pub const USER_AGENT: &str = concat!("expsum/", env!("CARGO_PKG_VERSION"), " (research toolkit)");
