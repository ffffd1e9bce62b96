//! Sentence-level entailment consistency (SummaC_Conv style) and the
//! retrieval-rescored variant.
//!
//! Each summary sentence is scored against every document sentence by an
//! [`EntailmentBackend`]; an [`Aggregator`] turns that distribution into one
//! sentence score, and the summary score is the mean over sentences.
//! In the rescored variant, sentences scoring below a threshold are checked
//! again against encyclopedia articles and keep the higher of the two.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::segment::{segment_sentences, tokenize, words};

/// Entailment probabilities of `hypothesis` given each premise unit.
pub trait EntailmentBackend: Send + Sync {
    fn score(&self, premises: &[String], hypothesis: &str) -> std::result::Result<Vec<f64>, String>;
}

impl<F> EntailmentBackend for F
where
    F: Fn(&[String], &str) -> std::result::Result<Vec<f64>, String> + Send + Sync,
{
    fn score(&self, premises: &[String], hypothesis: &str) -> std::result::Result<Vec<f64>, String> {
        self(premises, hypothesis)
    }
}

/// Deterministic stand-in: share of the hypothesis's content words that
/// occur in the premise.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalOverlapBackend;

impl EntailmentBackend for LexicalOverlapBackend {
    fn score(&self, premises: &[String], hypothesis: &str) -> std::result::Result<Vec<f64>, String> {
        let hyp: Vec<String> = content_words(hypothesis);
        Ok(premises
            .iter()
            .map(|p| {
                if hyp.is_empty() {
                    return 0.0;
                }
                let vocab: std::collections::HashSet<String> = words(p).into_iter().collect();
                hyp.iter().filter(|w| vocab.contains(*w)).count() as f64 / hyp.len() as f64
            })
            .collect())
    }
}

/// Collapses one sentence's entailment distribution into a score.
pub trait Aggregator: Send + Sync {
    fn aggregate(&self, probabilities: &[f64]) -> f64;
}

/// Histogram over `[0, 1]` in equal-width bins; the score is the mean of the
/// values in the highest non-empty bin, i.e. the strongest support found,
/// smoothed within one bin width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinnedAggregator {
    pub bins: usize,
}

impl Default for BinnedAggregator {
    fn default() -> Self {
        Self { bins: 50 }
    }
}

impl BinnedAggregator {
    pub fn bin_of(&self, p: f64) -> usize {
        ((p * self.bins as f64).floor() as usize).min(self.bins - 1)
    }

    pub fn histogram(&self, probabilities: &[f64]) -> Vec<usize> {
        let mut h = vec![0; self.bins];
        for &p in probabilities {
            h[self.bin_of(p)] += 1;
        }
        h
    }
}

impl Aggregator for BinnedAggregator {
    fn aggregate(&self, probabilities: &[f64]) -> f64 {
        let Some(top) = probabilities.iter().map(|&p| self.bin_of(p)).max() else {
            return 0.0;
        };
        let vals: Vec<f64> = probabilities.iter().copied().filter(|&p| self.bin_of(p) == top).collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Learned-style head: normalized histogram → linear layer → sigmoid.
/// Weights can be exported from a trained convolutional aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHistogramAggregator {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Aggregator for LinearHistogramAggregator {
    fn aggregate(&self, probabilities: &[f64]) -> f64 {
        if probabilities.is_empty() || self.weights.is_empty() {
            return 0.0;
        }
        let hist = BinnedAggregator { bins: self.weights.len() }.histogram(probabilities);
        let n = probabilities.len() as f64;
        let z: f64 = self.bias + hist.iter().zip(&self.weights).map(|(&c, w)| c as f64 / n * w).sum::<f64>();
        1.0 / (1.0 + (-z).exp())
    }
}

fn checked_scores(
    backend: &dyn EntailmentBackend,
    premises: &[String],
    hypothesis: &str,
    sentence: usize,
) -> Result<Vec<f64>> {
    let fail = |message: String| Error::Backend { sentence, message };
    let v = backend.score(premises, hypothesis).map_err(fail)?;
    if v.len() != premises.len() {
        return Err(fail(format!("returned {} scores for {} premises", v.len(), premises.len())));
    }
    if let Some(bad) = v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(fail(format!("probability {bad} outside [0, 1]")));
    }
    Ok(v)
}

fn sentence_texts(text: &str) -> Vec<String> {
    segment_sentences(text).into_iter().map(|s| s.text).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvResult {
    pub sentence_scores: Vec<f64>,
    pub aggregate: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn nonempty(document: &str, summary: &str) -> Result<(Vec<String>, Vec<String>)> {
    let doc = sentence_texts(document);
    let summ = sentence_texts(summary);
    if doc.is_empty() {
        return Err(Error::invalid("document is empty"));
    }
    if summ.is_empty() {
        return Err(Error::invalid("summary is empty"));
    }
    Ok((doc, summ))
}

pub fn summac_conv(
    document: &str,
    summary: &str,
    backend: &dyn EntailmentBackend,
    aggregator: &dyn Aggregator,
    jobs: usize,
) -> Result<ConvResult> {
    let (doc, summ) = nonempty(document, summary)?;
    let indexed: Vec<(usize, &String)> = summ.iter().enumerate().collect();
    let sentence_scores = map_ordered(&indexed, jobs, |&(i, s)| {
        checked_scores(backend, &doc, s, i).map(|p| aggregator.aggregate(&p))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ConvResult { aggregate: mean(&sentence_scores), sentence_scores })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub title: String,
    pub text: String,
}

/// Encyclopedia lookup. Zero hits is an empty list, not an error.
pub trait Retriever: Send + Sync {
    fn retrieve(&self, query: &str, limit: usize) -> Result<Vec<Article>>;
}

/// Replays recorded responses: `<dir>/<query-slug>.json` holding a list of
/// `{title, text}`. Queries with no recording return no articles.
#[derive(Debug, Clone)]
pub struct RecordedRetriever {
    dir: PathBuf,
}

impl RecordedRetriever {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::invalid(format!("retrieval fixture directory {} does not exist", dir.display())));
        }
        Ok(Self { dir })
    }

    pub fn slug(query: &str) -> String {
        let s: String = query
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_")
    }

    pub fn path_for(&self, query: &str) -> PathBuf {
        self.dir.join(format!("{}.json", Self::slug(query)))
    }
}

impl Retriever for RecordedRetriever {
    fn retrieve(&self, query: &str, limit: usize) -> Result<Vec<Article>> {
        check_query(query, limit)?;
        let path = self.path_for(query);
        if !path.is_file() {
            return Ok(Vec::new());
        }
        let raw = fs::read_to_string(&path)?;
        let mut articles: Vec<Article> = serde_json::from_str(&raw)
            .map_err(|e| Error::Retrieval(format!("{}: {e}", path.display())))?;
        articles.truncate(limit);
        Ok(articles)
    }
}

pub fn check_query(query: &str, limit: usize) -> Result<()> {
    if query.trim().is_empty() {
        return Err(Error::invalid("retrieval query is empty"));
    }
    if limit == 0 {
        return Err(Error::invalid("retrieval limit must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StarConfig {
    /// Sentences scoring strictly below this are re-checked.
    pub threshold: f64,
    pub articles_per_sentence: usize,
    pub query_spans: usize,
    pub query_terms: usize,
    /// Article windows, in words.
    pub chunk_words: usize,
    pub chunk_overlap: usize,
    pub jobs: usize,
}

impl Default for StarConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            articles_per_sentence: 3,
            query_spans: 2,
            query_terms: 3,
            chunk_words: 300,
            chunk_overlap: 50,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedScore {
    pub title: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceVerdict {
    pub sentence: String,
    pub source_score: f64,
    pub retrieved_scores: Vec<RetrievedScore>,
    pub final_score: f64,
    pub rescored: bool,
    #[serde(default)]
    pub retrieval_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarResult {
    pub verdicts: Vec<SentenceVerdict>,
    pub aggregate: f64,
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "also", "an", "and", "are", "as", "at", "be", "because", "been", "but", "by", "can",
    "could", "did", "do", "does", "for", "from", "had", "has", "have", "how", "however", "if", "in", "into", "is",
    "it", "its", "may", "might", "more", "most", "not", "of", "on", "one", "or", "other", "our", "so", "such",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "through", "to",
    "two", "up", "was", "we", "were", "what", "when", "which", "while", "who", "why", "will", "with", "would",
];

fn content_words(text: &str) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| w.chars().count() >= 3 && !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Builds a search query for one sentence: up to `spans` capitalized word
/// runs (a lone capitalized sentence-initial word or stopword does not
/// count), then up to `terms` content words ranked by frequency in
/// `context` (ties by first appearance in the sentence).
pub fn build_query(sentence: &str, context: &str, spans: usize, terms: usize) -> String {
    let toks = tokenize(sentence);
    let mut runs: Vec<Vec<String>> = Vec::new();
    let mut cur: Vec<(usize, String)> = Vec::new();
    let flush = |cur: &mut Vec<(usize, String)>, runs: &mut Vec<Vec<String>>| {
        let lone_initial = cur.len() == 1 && cur[0].0 == 0;
        if !cur.is_empty() && !lone_initial {
            runs.push(cur.iter().map(|(_, w)| w.clone()).collect());
        }
        cur.clear();
    };
    for (i, t) in toks.iter().enumerate() {
        let initial_stopword = i == 0 && STOPWORDS.contains(&t.text.to_lowercase().as_str());
        if t.is_word && !initial_stopword && t.text.chars().next().is_some_and(char::is_uppercase) {
            cur.push((i, t.text.clone()));
        } else {
            flush(&mut cur, &mut runs);
        }
    }
    flush(&mut cur, &mut runs);
    runs.truncate(spans);

    let in_spans: std::collections::HashSet<String> = runs.iter().flatten().map(|w| w.to_lowercase()).collect();
    let mut tf: HashMap<String, usize> = HashMap::new();
    for w in content_words(context) {
        *tf.entry(w).or_insert(0) += 1;
    }
    let mut seen = std::collections::HashSet::new();
    let mut candidates: Vec<(usize, usize, String)> = Vec::new();
    for (pos, w) in content_words(sentence).into_iter().enumerate() {
        if in_spans.contains(&w) || !seen.insert(w.clone()) {
            continue;
        }
        candidates.push((tf.get(&w).copied().unwrap_or(0), pos, w));
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut parts: Vec<String> = runs.into_iter().map(|r| r.join(" ")).collect();
    parts.extend(candidates.into_iter().take(terms).map(|c| c.2));
    parts.join(" ")
}

/// Overlapping word windows of at most `size` words, stepping by
/// `size - overlap`.
pub fn chunk_article(text: &str, size: usize, overlap: usize) -> Vec<String> {
    let ws: Vec<&str> = text.split_whitespace().collect();
    if ws.is_empty() {
        return Vec::new();
    }
    let size = size.max(1);
    let step = size.saturating_sub(overlap).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + size).min(ws.len());
        out.push(ws[start..end].join(" "));
        if end == ws.len() {
            break;
        }
        start += step;
    }
    out
}

pub fn summac_star(
    document: &str,
    summary: &str,
    backend: &dyn EntailmentBackend,
    aggregator: &dyn Aggregator,
    retriever: &dyn Retriever,
    cfg: &StarConfig,
) -> Result<StarResult> {
    let conv = summac_conv(document, summary, backend, aggregator, cfg.jobs)?;
    let sentences = sentence_texts(summary);
    let work: Vec<(usize, &String, f64)> =
        sentences.iter().zip(&conv.sentence_scores).enumerate().map(|(i, (s, &sc))| (i, s, sc)).collect();
    let verdicts = map_ordered(&work, cfg.jobs, |&(i, sentence, source_score)| {
        let mut v = SentenceVerdict {
            sentence: sentence.clone(),
            source_score,
            retrieved_scores: Vec::new(),
            final_score: source_score,
            rescored: false,
            retrieval_failed: false,
        };
        if source_score >= cfg.threshold {
            return Ok(v);
        }
        let query = build_query(sentence, summary, cfg.query_spans, cfg.query_terms);
        let articles = match retriever.retrieve(&query, cfg.articles_per_sentence) {
            Ok(a) => a,
            Err(e) => {
                tracing::warn!(sentence = i, "retrieval failed, keeping source score: {e}");
                v.retrieval_failed = true;
                return Ok(v);
            }
        };
        v.rescored = true;
        for article in articles.into_iter().take(cfg.articles_per_sentence) {
            let chunks = chunk_article(&article.text, cfg.chunk_words, cfg.chunk_overlap);
            if chunks.is_empty() {
                continue;
            }
            let probs = checked_scores(backend, &chunks, sentence, i)?;
            let score = probs.iter().copied().fold(0.0, f64::max);
            v.final_score = v.final_score.max(score);
            v.retrieved_scores.push(RetrievedScore { title: article.title, score });
        }
        Ok(v)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let aggregate = mean(&verdicts.iter().map(|v| v.final_score).collect::<Vec<_>>());
    Ok(StarResult { verdicts, aggregate })
}
