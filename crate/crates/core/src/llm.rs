//! Chat-completion gateway: prompt operations on top of a pluggable
//! transport, with bounded retries, request pacing and a cap on requests
//! in flight.
//!
//! Each call is stateless: one user message, no conversation history.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plan::{normalize_question, Plan};
use crate::prompts::{numbered_questions, render, PromptRendering, TemplateId};
use crate::segment::segment_sentences;

/// Built-in corpus profiles: generation cap and the `K` used by `*K` strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Scinews,
    Elife,
    Plos,
    Custom,
}

impl Profile {
    pub fn max_new_tokens(self) -> u32 {
        match self {
            Profile::Scinews => 1024,
            Profile::Elife => 512,
            Profile::Plos | Profile::Custom => 256,
        }
    }

    pub fn default_k(self) -> usize {
        match self {
            Profile::Scinews => 8,
            Profile::Elife => 4,
            Profile::Plos | Profile::Custom => 2,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "scinews" => Ok(Profile::Scinews),
            "elife" => Ok(Profile::Elife),
            "plos" => Ok(Profile::Plos),
            "custom" => Ok(Profile::Custom),
            _ => Err(Error::invalid(format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_new_tokens: u32,
    pub request_timeout_secs: f64,
    pub max_parallel_requests: usize,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Minimum spacing between request starts.
    pub min_request_interval_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-2024-05-13".into(),
            temperature: 1.0,
            top_p: 1.0,
            frequency_penalty: 0.2,
            presence_penalty: 0.2,
            max_new_tokens: 1024,
            request_timeout_secs: 120.0,
            max_parallel_requests: 4,
            api_key_env: "OPENAI_API_KEY".into(),
            max_attempts: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            min_request_interval_ms: 0,
        }
    }
}

impl LlmConfig {
    pub fn for_profile(profile: Profile) -> Self {
        Self { max_new_tokens: profile.max_new_tokens(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::invalid(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(0.0..=2.0).contains(&self.top_p) {
            return Err(Error::invalid(format!("top_p {} outside [0, 2]", self.top_p)));
        }
        if self.max_parallel_requests == 0 {
            return Err(Error::invalid("max_parallel_requests must be at least 1"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be at least 1"));
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs.max(0.0))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Wire body of a chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    /// Unique per gateway; ties each response to its request.
    pub id: u64,
    pub prompt: PromptRendering,
    pub chat: ChatRequest,
}

/// A single failed attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    /// HTTP status, when a response was received.
    pub status: Option<u16>,
    pub message: String,
}

impl TransportError {
    pub fn new(status: Option<u16>, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    /// Connection failures, 429 and 5xx are retried; other 4xx are not.
    pub fn is_retryable(&self) -> bool {
        match self.status {
            None => true,
            Some(429) => true,
            Some(s) => s >= 500,
        }
    }
}

/// Sends one request and returns the first choice's message content.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError>;
}

impl<F> CompletionBackend for F
where
    F: Fn(&CompletionRequest) -> std::result::Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError> {
        self(request)
    }
}

/// Canned responses read from a directory.
///
/// For a prompt, the stub returns `<sha256-of-prompt>.txt` if present,
/// otherwise `<template-name>.txt` (e.g. `question_generation.txt`).
#[derive(Debug, Clone)]
pub struct StubBackend {
    dir: PathBuf,
}

impl StubBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::invalid(format!("stub gateway directory {} does not exist", dir.display())));
        }
        Ok(Self { dir })
    }

    pub fn prompt_key(prompt: &str) -> String {
        hex::encode(Sha256::digest(prompt.as_bytes()))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl CompletionBackend for StubBackend {
    fn complete(&self, request: &CompletionRequest) -> std::result::Result<String, TransportError> {
        let by_hash = self.dir.join(format!("{}.txt", Self::prompt_key(&request.prompt.text)));
        let by_template = self.dir.join(format!("{}.txt", request.prompt.template.as_str()));
        for path in [by_hash, by_template] {
            if path.is_file() {
                return fs::read_to_string(&path)
                    .map_err(|e| TransportError::new(None, format!("{}: {e}", path.display())));
            }
        }
        Err(TransportError::new(
            Some(404),
            format!("no canned response for template {}", request.prompt.template),
        ))
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self { permits: Mutex::new(n), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock();
        while *p == 0 {
            self.freed.wait(&mut p);
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock() += 1;
        self.0.freed.notify_one();
    }
}

/// Admits request starts no closer together than a fixed interval.
struct Pacer {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl Pacer {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let delay = {
            let mut next = self.next.lock();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }
}

/// A generated question and whether it had to be repaired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub text: String,
    pub normalized: bool,
}

pub struct Gateway {
    cfg: LlmConfig,
    backend: Arc<dyn CompletionBackend>,
    in_flight: Semaphore,
    pacer: Pacer,
    next_id: AtomicU64,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl Gateway {
    pub fn new(cfg: LlmConfig, backend: Arc<dyn CompletionBackend>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            in_flight: Semaphore::new(cfg.max_parallel_requests),
            pacer: Pacer {
                interval: Duration::from_millis(cfg.min_request_interval_ms),
                next: Mutex::new(None),
            },
            cfg,
            backend,
            next_id: AtomicU64::new(0),
            sleep: Box::new(std::thread::sleep),
        })
    }

    /// Replaces the backoff sleep (tests record delays instead of waiting).
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    fn chat(&self, prompt: &str) -> ChatRequest {
        ChatRequest {
            model: self.cfg.model.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: self.cfg.temperature,
            top_p: self.cfg.top_p,
            frequency_penalty: self.cfg.frequency_penalty,
            presence_penalty: self.cfg.presence_penalty,
            max_tokens: self.cfg.max_new_tokens,
        }
    }

    /// Sends a rendered prompt, retrying transient failures with exponential backoff.
    pub fn complete(&self, prompt: PromptRendering) -> Result<String> {
        let request = CompletionRequest {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            chat: self.chat(&prompt.text),
            prompt,
        };
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.pacer.wait();
                self.backend.complete(&request)
            };
            match outcome {
                Ok(text) if text.trim().is_empty() => return Err(Error::EmptyResponse),
                Ok(text) => return Ok(text),
                Err(e) => {
                    tracing::warn!(attempt, status = ?e.status, template = %request.prompt.template, "completion failed: {}", e.message);
                    if !e.is_retryable() || attempt >= self.cfg.max_attempts {
                        return Err(Error::Gateway { attempts: attempt, message: e.message });
                    }
                    (self.sleep)(self.cfg.backoff(attempt));
                }
            }
        }
    }

    /// Runs `f` over `items` with at most `max_parallel_requests` workers.
    /// Results come back in input order.
    pub fn map_parallel<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        crate::par::map_ordered(items, self.cfg.max_parallel_requests, f)
    }

    pub fn generate_question(&self, context: &str, target: &str) -> Result<GeneratedQuestion> {
        if target.trim().is_empty() {
            return Err(Error::invalid("target sentence is empty"));
        }
        let prompt = render(TemplateId::QuestionGeneration, &[("context", context), ("target", target)])?;
        self.question_from(prompt)
    }

    pub fn generate_irrelevant_question(&self) -> Result<GeneratedQuestion> {
        self.question_from(render(TemplateId::IrrelevantQuestion, &[])?)
    }

    fn question_from(&self, prompt: PromptRendering) -> Result<GeneratedQuestion> {
        let raw = self.complete(prompt)?;
        let (text, normalized) = normalize_question(&raw).map_err(|_| Error::EmptyResponse)?;
        Ok(GeneratedQuestion { text, normalized })
    }

    pub fn summarize_zero_shot(&self, document: &str) -> Result<String> {
        require("document", document)?;
        self.complete(render(TemplateId::SummaryZeroShot, &[("document", document)])?)
    }

    pub fn summarize_icl(&self, example_doc: &str, example_summary: &str, document: &str) -> Result<String> {
        require("example document", example_doc)?;
        require("example summary", example_summary)?;
        require("document", document)?;
        self.complete(render(
            TemplateId::SummaryIcl,
            &[
                ("example_document", example_doc),
                ("example_summary", example_summary),
                ("document", document),
            ],
        )?)
    }

    pub fn summarize_with_plan(&self, document: &str, plan: &Plan) -> Result<String> {
        self.summarize_with_questions(document, plan.texts())
    }

    pub fn summarize_with_questions<'q>(&self, document: &str, questions: impl IntoIterator<Item = &'q str>) -> Result<String> {
        require("document", document)?;
        let questions = numbered_questions(questions);
        if questions.is_empty() {
            return Err(Error::invalid("plan has no questions"));
        }
        self.complete(render(
            TemplateId::SummaryWithPlan,
            &[("document", document), ("questions", &questions)],
        )?)
    }

    pub fn extract_pairs_llm(&self, document: &str) -> Result<Vec<AlignedPair>> {
        require("document", document)?;
        let raw = self.complete(render(TemplateId::ExplanatoryExtraction, &[("document", document)])?)?;
        let records = parse_extraction(&raw)?;
        align_pairs(document, &records)
    }
}

fn require(what: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        Err(Error::invalid(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedRecord {
    pub explanatory_sentence: String,
    pub target_sentence: String,
}

/// Parses the list-of-dictionaries reply, accepting strict JSON as well as
/// the prompt's own style (bare keys, single-quoted strings, trailing commas).
pub fn parse_extraction(raw: &str) -> Result<Vec<ExtractedRecord>> {
    let format_err = |message: &str| Error::Format { message: message.to_string(), raw: raw.to_string() };
    let start = raw.find('[').ok_or_else(|| format_err("no list found"))?;
    let end = raw.rfind(']').ok_or_else(|| format_err("unterminated list"))?;
    if end < start {
        return Err(format_err("unterminated list"));
    }
    let body = &raw[start..=end];
    if let Ok(v) = serde_json::from_str::<Vec<ExtractedRecord>>(body) {
        return Ok(v);
    }
    let mut p = LenientParser { s: body.as_bytes(), src: body, pos: 0 };
    p.list().map_err(|m| format_err(&m))
}

struct LenientParser<'a> {
    s: &'a [u8],
    src: &'a str,
    pos: usize,
}

impl LenientParser<'_> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> std::result::Result<(), String> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected `{}` at byte {}", c as char, self.pos))
        }
    }

    fn list(&mut self) -> std::result::Result<Vec<ExtractedRecord>, String> {
        self.expect(b'[')?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                Some(b'{') => out.push(self.object()?),
                _ => return Err(format!("expected an object at byte {}", self.pos)),
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {}
                _ => return Err(format!("expected `,` or `]` at byte {}", self.pos)),
            }
        }
        if self.peek().is_some() {
            return Err("trailing content after list".into());
        }
        Ok(out)
    }

    fn object(&mut self) -> std::result::Result<ExtractedRecord, String> {
        self.expect(b'{')?;
        let mut explanatory = None;
        let mut target = None;
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.key()?;
            self.expect(b':')?;
            let value = self.string()?;
            match key.as_str() {
                "explanatory_sentence" => explanatory = Some(value),
                "target_sentence" => target = Some(value),
                _ => {}
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(format!("expected `,` or `}}` at byte {}", self.pos)),
            }
        }
        Ok(ExtractedRecord {
            explanatory_sentence: explanatory.ok_or("record lacks explanatory_sentence")?,
            target_sentence: target.ok_or("record lacks target_sentence")?,
        })
    }

    fn key(&mut self) -> std::result::Result<String, String> {
        match self.peek() {
            Some(b'"' | b'\'') => self.string(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.s.len() && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_') {
                    self.pos += 1;
                }
                Ok(self.src[start..self.pos].to_string())
            }
            _ => Err(format!("expected a key at byte {}", self.pos)),
        }
    }

    /// A quoted string. An unescaped quote only closes the string when the
    /// next non-space byte is `,`, `}` or `:`, so apostrophes inside
    /// single-quoted sentences survive.
    fn string(&mut self) -> std::result::Result<String, String> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => q,
            _ => return Err(format!("expected a string at byte {}", self.pos)),
        };
        self.pos += 1;
        let mut out = String::new();
        let mut seg_start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos];
            if c == b'\\' && self.pos + 1 < self.s.len() {
                out.push_str(&self.src[seg_start..self.pos]);
                let esc = self.s[self.pos + 1];
                out.push(match esc {
                    b'n' => '\n',
                    b't' => '\t',
                    other => other as char,
                });
                self.pos += 2;
                seg_start = self.pos;
                continue;
            }
            if c == quote {
                let mut k = self.pos + 1;
                while k < self.s.len() && self.s[k].is_ascii_whitespace() {
                    k += 1;
                }
                if matches!(self.s.get(k), Some(b',' | b'}' | b':' | b']') | None) {
                    out.push_str(&self.src[seg_start..self.pos]);
                    self.pos += 1;
                    return Ok(out);
                }
            }
            self.pos += 1;
        }
        Err("unterminated string".into())
    }
}

/// A model-extracted pair mapped back onto sentence indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub explanatory_index: usize,
    pub target_index: usize,
    pub explanatory_sentence: String,
    pub target_sentence: String,
    /// Character overlap with the aligned sentences (1.0 for exact matches).
    pub confidence: f64,
    /// Both sides matched a sentence exactly.
    pub exact: bool,
}

pub const ALIGNMENT_THRESHOLD: f64 = 0.6;

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Longest common subsequence of characters over the longer length.
pub fn char_overlap(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] as f64 / a.len().max(b.len()) as f64
}

fn align_one(sentence: &str, candidates: &[String]) -> Option<(usize, f64)> {
    let q = squash(sentence);
    if let Some(i) = candidates.iter().position(|c| *c == q) {
        return Some((i, 1.0));
    }
    let (i, score) = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, char_overlap(&q, c)))
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((i, s)),
        })?;
    (score >= ALIGNMENT_THRESHOLD).then_some((i, score))
}

/// Maps extracted sentence texts to sentence indices of `document`:
/// exact match after whitespace/case folding, else best character overlap
/// at or above [`ALIGNMENT_THRESHOLD`]. Records that fail to align, or that
/// align both sides to the same sentence, are dropped.
pub fn align_pairs(document: &str, records: &[ExtractedRecord]) -> Result<Vec<AlignedPair>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let sentences: Vec<String> = segment_sentences(document).iter().map(|s| squash(&s.text)).collect();
    let mut out = Vec::new();
    for r in records {
        let (Some((e, ce)), Some((t, ct))) = (
            align_one(&r.explanatory_sentence, &sentences),
            align_one(&r.target_sentence, &sentences),
        ) else {
            tracing::debug!("dropping unaligned record: {:?}", r.explanatory_sentence);
            continue;
        };
        if e == t {
            continue;
        }
        out.push(AlignedPair {
            explanatory_index: e,
            target_index: t,
            explanatory_sentence: r.explanatory_sentence.clone(),
            target_sentence: r.target_sentence.clone(),
            confidence: ce.min(ct),
            exact: ce == 1.0 && ct == 1.0,
        });
    }
    if out.is_empty() {
        return Err(Error::Alignment);
    }
    out.sort_by_key(|p| (p.explanatory_index, p.target_index));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, AtomicUsize};

    fn gateway(backend: impl CompletionBackend + 'static) -> Gateway {
        Gateway::new(LlmConfig { initial_backoff_ms: 0, ..Default::default() }, Arc::new(backend)).unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = LlmConfig::default();
        assert_eq!((c.temperature, c.top_p, c.frequency_penalty, c.presence_penalty), (1.0, 1.0, 0.2, 0.2));
        assert_eq!(LlmConfig::for_profile(Profile::Elife).max_new_tokens, 512);
        assert_eq!(LlmConfig::for_profile(Profile::Plos).max_new_tokens, 256);
        assert!(LlmConfig { temperature: 2.5, ..c.clone() }.validate().is_err());
        assert!(LlmConfig { max_parallel_requests: 0, ..c }.validate().is_err());
    }

    #[test]
    fn retries_then_gives_up() {
        let calls = Arc::new(AtomicU32::new(0));
        let seen = calls.clone();
        let g = gateway(move |_: &CompletionRequest| {
            seen.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::new(Some(503), "busy"))
        });
        match g.summarize_zero_shot("doc") {
            Err(Error::Gateway { attempts, .. }) => assert_eq!(attempts, 5),
            other => panic!("{other:?}"),
        }
        assert_eq!(calls.load(Ordering::SeqCst), 5);
    }

    #[test]
    fn no_retry_on_client_error_but_retry_on_429() {
        let calls = Arc::new(AtomicU32::new(0));
        let seen = calls.clone();
        let g = gateway(move |_: &CompletionRequest| {
            let n = seen.fetch_add(1, Ordering::SeqCst);
            match n {
                0 => Err(TransportError::new(Some(429), "slow down")),
                _ => Err(TransportError::new(Some(401), "bad key")),
            }
        });
        assert!(matches!(g.summarize_zero_shot("doc"), Err(Error::Gateway { attempts: 2, .. })));
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let c = LlmConfig { initial_backoff_ms: 100, max_backoff_ms: 350, ..Default::default() };
        let got: Vec<u128> = (1..=4).map(|a| c.backoff(a).as_millis()).collect();
        assert_eq!(got, [100, 200, 350, 350]);
    }

    #[test]
    fn question_normalization_and_empty() {
        let g = gateway(|_: &CompletionRequest| Ok("  Why does it matter \n".to_string()));
        let q = g.generate_question("", "It matters.").unwrap();
        assert_eq!(q, GeneratedQuestion { text: "Why does it matter?".into(), normalized: true });
        assert!(g.generate_question("ctx", " ").is_err());
        let g = gateway(|_: &CompletionRequest| Ok("   ".to_string()));
        assert!(matches!(g.generate_irrelevant_question(), Err(Error::EmptyResponse)));
    }

    #[test]
    fn plan_prompt_lists_questions() {
        let g = gateway(|r: &CompletionRequest| Ok(r.prompt.text.clone()));
        let plan = Plan {
            strategy: crate::plan::Strategy::AllEdus,
            seed: None,
            questions: ["A?", "B?", "C?"]
                .iter()
                .enumerate()
                .map(|(i, t)| crate::plan::PlanQuestion {
                    text: t.to_string(),
                    category: None,
                    source_target_index: i,
                    order: i,
                    normalized: false,
                })
                .collect(),
        };
        let echoed = g.summarize_with_plan("Doc.", &plan).unwrap();
        assert!(echoed.contains("Planning Questions: 1. A?\n2. B?\n3. C?\n"));
        assert!(g.summarize_with_plan("Doc.", &Plan::empty(crate::plan::Strategy::AllEdus)).is_err());
    }

    #[test]
    fn parallel_map_keeps_order_and_cap() {
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (a, p) = (active.clone(), peak.clone());
        let g = Gateway::new(
            LlmConfig { max_parallel_requests: 3, ..Default::default() },
            Arc::new(move |r: &CompletionRequest| {
                let now = a.fetch_add(1, Ordering::SeqCst) + 1;
                p.fetch_max(now, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                a.fetch_sub(1, Ordering::SeqCst);
                Ok(r.prompt.slots["document"].clone())
            }),
        )
        .unwrap();
        let docs: Vec<String> = (0..20).map(|i| format!("doc {i}")).collect();
        let out = g.map_parallel(&docs, |d| g.summarize_zero_shot(d).unwrap());
        assert_eq!(out, docs);
        assert!(peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn lenient_extraction_parsing() {
        let raw = "Here you go:\n[\n  {\n    explanatory_sentence: 'It's like a coach.',\n    target_sentence: 'The cerebellum adjusts timing.'\n  },\n]";
        let r = parse_extraction(raw).unwrap();
        assert_eq!(r[0].explanatory_sentence, "It's like a coach.");
        assert_eq!(r[0].target_sentence, "The cerebellum adjusts timing.");
        assert!(parse_extraction("[]").unwrap().is_empty());
        assert!(matches!(parse_extraction("[{explanatory_sentence: 'x'}]"), Err(Error::Format { .. })));
        assert!(matches!(parse_extraction("no list"), Err(Error::Format { .. })));
        let json = r#"[{"explanatory_sentence": "a", "target_sentence": "b"}]"#;
        assert_eq!(parse_extraction(json).unwrap().len(), 1);
    }

    #[test]
    fn alignment() {
        let doc = "The cerebellum adjusts timing. It works like a coach. Coaches watch replays.";
        let recs = vec![
            ExtractedRecord {
                explanatory_sentence: "It works like a coach.".into(),
                target_sentence: "The cerebellum adjusts timing.".into(),
            },
            ExtractedRecord {
                explanatory_sentence: "Coaches watch the replays".into(),
                target_sentence: "it works like a coach.".into(),
            },
        ];
        let a = align_pairs(doc, &recs).unwrap();
        assert_eq!((a[0].explanatory_index, a[0].target_index, a[0].exact), (1, 0, true));
        assert_eq!((a[1].explanatory_index, a[1].target_index, a[1].exact), (2, 1, false));
        assert!(a[1].confidence >= ALIGNMENT_THRESHOLD && a[1].confidence < 1.0);
        let bad = vec![ExtractedRecord { explanatory_sentence: "zzz".into(), target_sentence: "qqq".into() }];
        assert!(matches!(align_pairs(doc, &bad), Err(Error::Alignment)));
    }
}
