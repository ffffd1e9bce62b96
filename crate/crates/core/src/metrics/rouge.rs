//! ROUGE-2 and summary-level ROUGE-L, following the conventions of the
//! widely used `rouge_score` package: lowercase, non-alphanumerics become
//! separators, tokens longer than three characters are stemmed.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};

use crate::segment::segment_sentences;

static NON_ALNUM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^a-z0-9]+").expect("pattern"));
static STEMMER: LazyLock<Stemmer> = LazyLock::new(|| Stemmer::create(Algorithm::English));

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_hits(hits: usize, candidate_len: usize, reference_len: usize) -> Self {
        let precision = if candidate_len == 0 { 0.0 } else { hits as f64 / candidate_len as f64 };
        let recall = if reference_len == 0 { 0.0 } else { hits as f64 / reference_len as f64 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1 }
    }
}

pub fn rouge_tokens(text: &str, stem: bool) -> Vec<String> {
    let lower = text.to_lowercase();
    NON_ALNUM
        .replace_all(&lower, " ")
        .split_whitespace()
        .map(|t| if stem && t.len() > 3 { STEMMER.stem(t).into_owned() } else { t.to_string() })
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram overlap.
pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> RougeScore {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let hits: usize = r.iter().map(|(g, &rc)| rc.min(c.get(g).copied().unwrap_or(0))).sum();
    RougeScore::from_hits(hits, c.values().sum(), r.values().sum())
}

/// Indices into `a` of one longest common subsequence with `b`, using the
/// standard table backtrack (prefer moving in `b` only on a strict gain).
pub fn lcs_indices(a: &[String], b: &[String]) -> Vec<usize> {
    let (n, m) = (a.len(), b.len());
    let mut t = vec![vec![0u32; m + 1]; n + 1];
    for i in 1..=n {
        for j in 1..=m {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    let (mut i, mut j) = (n, m);
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if a[i - 1] == b[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

/// Summary-level LCS over pre-split sentences.
pub fn rouge_lsum_sentences(candidate: &[Vec<String>], reference: &[Vec<String>]) -> RougeScore {
    let m: usize = reference.iter().map(Vec::len).sum();
    let n: usize = candidate.iter().map(Vec::len).sum();
    if m == 0 || n == 0 {
        return RougeScore::from_hits(0, n, m);
    }
    let mut left_r: HashMap<&str, usize> = HashMap::new();
    let mut left_c: HashMap<&str, usize> = HashMap::new();
    for t in reference.iter().flatten() {
        *left_r.entry(t).or_insert(0) += 1;
    }
    for t in candidate.iter().flatten() {
        *left_c.entry(t).or_insert(0) += 1;
    }
    let mut hits = 0;
    for r in reference {
        let mut union: Vec<usize> = candidate.iter().flat_map(|c| lcs_indices(r, c)).collect();
        union.sort_unstable();
        union.dedup();
        for i in union {
            let tok = r[i].as_str();
            let (Some(rc), Some(cc)) = (left_r.get(tok).copied(), left_c.get(tok).copied()) else { continue };
            if rc > 0 && cc > 0 {
                hits += 1;
                left_r.insert(tok, rc - 1);
                left_c.insert(tok, cc - 1);
            }
        }
    }
    RougeScore::from_hits(hits, n, m)
}

fn sentence_tokens(text: &str, stem: bool) -> Vec<Vec<String>> {
    segment_sentences(text)
        .iter()
        .map(|s| rouge_tokens(&s.text, stem))
        .filter(|t| !t.is_empty())
        .collect()
}

/// (ROUGE-2 F1, ROUGE-Lsum F1). Zero overlap yields zeros.
pub fn rouge_scores(candidate: &str, reference: &str, stem: bool) -> (f64, f64) {
    let r2 = rouge_n(&rouge_tokens(candidate, stem), &rouge_tokens(reference, stem), 2).f1;
    let lsum = rouge_lsum_sentences(&sentence_tokens(candidate, stem), &sentence_tokens(reference, stem)).f1;
    (r2, lsum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens() {
        assert_eq!(rouge_tokens("The Running dogs, ran!", true), ["the", "run", "dog", "ran"]);
        assert_eq!(rouge_tokens("e-mail 3.14", false), ["e", "mail", "3", "14"]);
    }

    #[test]
    fn bigram_example() {
        let (r2, _) = rouge_scores("a b c d", "a b x d", false);
        assert!((r2 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_disjoint() {
        let t = "Cells divide. The membrane splits in two.";
        assert_eq!(rouge_scores(t, t, true), (1.0, 1.0));
        assert_eq!(rouge_scores("alpha beta", "gamma delta", true), (0.0, 0.0));
    }

    #[test]
    fn union_lcs_counts_each_token_once() {
        let toks = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        let r = vec![toks("w1 w2 w3 w4 w5")];
        let c = vec![toks("w1 w2 w6 w7 w8"), toks("w1 w3 w8 w9 w5")];
        // Union LCS is {w1, w2, w3, w5}.
        let s = rouge_lsum_sentences(&c, &r);
        assert!((s.recall - 0.8).abs() < 1e-12);
        assert!((s.precision - 0.4).abs() < 1e-12);
    }
}
