use std::time::Duration;

use expsum::consistency::EntailmentBackend;
use expsum::{Error, Result};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

#[derive(Serialize)]
struct ScoreRequest<'a> {
    premises: &'a [String],
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    probabilities: Vec<f64>,
}

/// Client for an entailment service taking `{premises, hypothesis}` and
/// answering `{probabilities}`, one per premise.
pub struct HttpEntailment {
    client: Client,
    url: String,
}

impl HttpEntailment {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .user_agent(crate::USER_AGENT)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("http client: {e}")))?;
        Ok(Self { client, url: url.into() })
    }
}

impl EntailmentBackend for HttpEntailment {
    fn score(&self, premises: &[String], hypothesis: &str) -> std::result::Result<Vec<f64>, String> {
        let resp = self
            .client
            .post(&self.url)
            .json(&ScoreRequest { premises, hypothesis })
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        resp.json::<ScoreResponse>().map(|r| r.probabilities).map_err(|e| e.to_string())
    }
}
