//! Extractive fragment statistics (coverage, density, compression).
//!
//! The summary is scanned left to right; at each position the longest run
//! of tokens shared verbatim with any document position forms a fragment,
//! and scanning resumes after it. Unmatched tokens are skipped.

use crate::error::{Error, Result};
use crate::segment::tokenize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractiveStats {
    pub coverage: f64,
    pub density: f64,
    pub compression: f64,
}

pub fn stat_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text.to_lowercase()).collect()
}

/// Lengths of the greedy fragments of `summary` against `document`.
pub fn fragments<T: PartialEq>(document: &[T], summary: &[T]) -> Vec<usize> {
    // run[j] = length of the common run starting at (i, j); computed
    // right-to-left over the summary so each row reuses the next one.
    let n = document.len();
    let mut best_at = vec![0usize; summary.len()];
    let mut next = vec![0usize; n + 1];
    let mut cur = vec![0usize; n + 1];
    for i in (0..summary.len()).rev() {
        let mut best = 0;
        for j in (0..n).rev() {
            cur[j] = if summary[i] == document[j] { next[j + 1] + 1 } else { 0 };
            best = best.max(cur[j]);
        }
        best_at[i] = best;
        std::mem::swap(&mut next, &mut cur);
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < summary.len() {
        let len = best_at[i];
        if len > 0 {
            out.push(len);
        }
        i += len.max(1);
    }
    out
}

pub fn extractive_stats_tokens<T: PartialEq>(document: &[T], summary: &[T]) -> Result<ExtractiveStats> {
    if summary.is_empty() {
        return Err(Error::invalid("summary has no tokens"));
    }
    if document.is_empty() {
        return Err(Error::invalid("document has no tokens"));
    }
    let frags = fragments(document, summary);
    let s = summary.len() as f64;
    Ok(ExtractiveStats {
        coverage: frags.iter().sum::<usize>() as f64 / s,
        density: frags.iter().map(|&f| (f * f) as f64).sum::<f64>() / s,
        compression: document.len() as f64 / s,
    })
}

pub fn extractive_stats(document: &str, summary: &str) -> Result<ExtractiveStats> {
    extractive_stats_tokens(&stat_tokens(document), &stat_tokens(summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_brown() {
        let s = extractive_stats("the quick brown fox", "quick brown").unwrap();
        assert_eq!((s.coverage, s.density, s.compression), (1.0, 2.0, 2.0));
    }

    #[test]
    fn identity_and_disjoint() {
        let d = "a b c d e";
        let s = extractive_stats(d, d).unwrap();
        assert_eq!((s.coverage, s.density, s.compression), (1.0, 5.0, 1.0));
        let s = extractive_stats(d, "x y").unwrap();
        assert_eq!((s.coverage, s.density), (0.0, 0.0));
        assert!(extractive_stats(d, "").is_err());
    }

    #[test]
    fn longest_match_wins_over_first_match() {
        // "b c" occurs first as a 2-run, later as a 3-run "b c d".
        assert_eq!(fragments(&["b", "c", "x", "b", "c", "d"], &["b", "c", "d"]), [3]);
    }
}
