use std::env;

use expsum::llm::{CompletionBackend, CompletionRequest, LlmConfig, TransportError};
use expsum::{Error, Result};
use reqwest::blocking::Client;
use serde::Deserialize;

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

/// Posts chat requests to an OpenAI-compatible endpoint.
pub struct ChatClient {
    client: Client,
    endpoint: String,
    api_key: String,
}

impl ChatClient {
    /// Reads the API key from the environment variable named in `cfg`.
    pub fn from_config(cfg: &LlmConfig) -> Result<Self> {
        let api_key = env::var(&cfg.api_key_env)
            .map_err(|_| Error::InvalidArgument(format!("environment variable {} is not set", cfg.api_key_env)))?;
        Self::new(cfg, api_key)
    }

    pub fn new(cfg: &LlmConfig, api_key: String) -> Result<Self> {
        let client = Client::builder()
            .timeout(cfg.request_timeout())
            .user_agent(crate::USER_AGENT)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("http client: {e}")))?;
        Ok(Self { client, endpoint: cfg.endpoint.clone(), api_key })
    }
}

impl CompletionBackend for ChatClient {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&request.chat)
            .send()
            .map_err(|e| TransportError::new(None, e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TransportError::new(None, e.to_string()))?;
        if !status.is_success() {
            let snippet: String = body.chars().take(300).collect();
            return Err(TransportError::new(Some(status.as_u16()), format!("HTTP {status}: {snippet}")));
        }
        let parsed: ChatResponse = serde_json::from_str(&body)
            .map_err(|e| TransportError::new(Some(status.as_u16()), format!("malformed response: {e}")))?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}
