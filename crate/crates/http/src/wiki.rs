use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::Duration;

use expsum::consistency::{check_query, Article, RecordedRetriever, Retriever};
use expsum::{Error, Result};
use reqwest::blocking::Client;
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub const DEFAULT_API: &str = "https://en.wikipedia.org/w/api.php";

#[derive(Deserialize)]
struct SearchResponse {
    query: Option<SearchQuery>,
}

#[derive(Deserialize)]
struct SearchQuery {
    search: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    title: String,
}

#[derive(Deserialize)]
struct ExtractResponse {
    query: Option<ExtractQuery>,
}

#[derive(Deserialize)]
struct ExtractQuery {
    pages: std::collections::BTreeMap<String, Page>,
}

#[derive(Deserialize)]
struct Page {
    title: String,
    #[serde(default)]
    extract: Option<String>,
}

/// Search-then-extract against the MediaWiki action API.
pub struct WikipediaRetriever {
    client: Client,
    api: String,
    attempts: u32,
    backoff: Duration,
    record_to: Option<RecordedRetriever>,
}

impl WikipediaRetriever {
    pub fn new(api: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = Client::builder()
            .timeout(timeout)
            .user_agent(crate::USER_AGENT)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("http client: {e}")))?;
        Ok(Self { client, api: api.into(), attempts: 3, backoff: Duration::from_millis(500), record_to: None })
    }

    pub fn with_retries(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    /// Also saves every result in the replay format read by
    /// [`RecordedRetriever`].
    pub fn recording(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        self.record_to = Some(RecordedRetriever::new(dir)?);
        Ok(self)
    }

    fn get<T: DeserializeOwned>(&self, params: &[(&str, &str)]) -> Result<T> {
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.client.get(&self.api).query(params).send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<T>().map_err(|e| Error::Retrieval(format!("malformed response: {e}")));
                }
                Ok(resp) => {
                    let status = resp.status();
                    last = format!("HTTP {status}");
                    if status.is_client_error() && status.as_u16() != 429 {
                        break;
                    }
                }
                Err(e) => last = e.to_string(),
            }
            if attempt < self.attempts {
                tracing::warn!(attempt, "wikipedia request failed: {last}");
                thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
        }
        Err(Error::Retrieval(last))
    }
}

impl Retriever for WikipediaRetriever {
    fn retrieve(&self, query: &str, limit: usize) -> Result<Vec<Article>> {
        check_query(query, limit)?;
        let limit_s = limit.to_string();
        let search: SearchResponse = self.get(&[
            ("action", "query"),
            ("list", "search"),
            ("srsearch", query),
            ("srlimit", &limit_s),
            ("format", "json"),
        ])?;
        let titles: Vec<String> = search.query.map(|q| q.search).unwrap_or_default().into_iter().map(|h| h.title).take(limit).collect();
        let mut articles = Vec::with_capacity(titles.len());
        for title in titles {
            let page: ExtractResponse = self.get(&[
                ("action", "query"),
                ("prop", "extracts"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("titles", &title),
                ("format", "json"),
            ])?;
            let text = page
                .query
                .and_then(|q| q.pages.into_values().find_map(|p| p.extract.map(|e| (p.title, e))));
            if let Some((title, text)) = text {
                articles.push(Article { title, text });
            }
        }
        if let Some(rec) = &self.record_to {
            fs::write(rec.path_for(query), serde_json::to_string_pretty(&articles)?)?;
        }
        Ok(articles)
    }
}
