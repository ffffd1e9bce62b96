//! Document-level SARI.
//!
//! Per n-gram order 1..=4 (lowercased whitespace tokens, one reference):
//!
//! * keep: F1 of kept source n-grams that the reference also keeps, with
//!   counts clipped by multiset intersection;
//! * delete: precision of deleted source n-grams that the reference also
//!   drops;
//! * add: set F1 of candidate n-grams absent from the source that the
//!   reference contains.
//!
//! Length penalties, with O/R/I the candidate/reference/source token counts
//! and So/Sr the candidate/reference sentence counts:
//!
//! ```text
//! LP1 = 1                           if O >= R, else exp((O - R) / O)
//! LP2 = 1                           if O <= R, else exp((R - O) / max(I - R, 1))
//! SLP = exp(-|Sr - So| / max(Sr, So))
//! ```
//!
//! D-SARI = 100 * (keep * LP2 * SLP + delete * LP2 + add * LP1) / 3, where
//! each component is the mean over the four orders. A worked example lives
//! in `docs/d_sari.md`.

use std::collections::{BTreeMap, BTreeSet};

use crate::segment::segment_sentences;

type Counts<'a> = BTreeMap<&'a [String], usize>;

fn counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut m = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn get(m: &Counts<'_>, k: &[String]) -> usize {
    m.get(k).copied().unwrap_or(0)
}

fn f1(p: f64, r: f64) -> f64 {
    if p > 0.0 || r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Component scores for one n-gram order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Components {
    pub keep: f64,
    pub delete: f64,
    pub add: f64,
}

pub fn order_components(source: &[String], candidate: &[String], reference: &[String], n: usize) -> Components {
    let s = counts(source, n);
    let c = counts(candidate, n);
    let r = counts(reference, n);

    // keep
    let (mut kp, mut kp_n) = (0.0, 0usize);
    for (g, &sc) in &s {
        let kept = sc.min(get(&c, g));
        if kept > 0 {
            kp += kept.min(get(&r, g)) as f64 / kept as f64;
            kp_n += 1;
        }
    }
    let (mut kr, mut kr_n) = (0.0, 0usize);
    for (g, &sc) in &s {
        let all = sc.min(get(&r, g));
        if all > 0 {
            let good = sc.min(get(&c, g)).min(get(&r, g));
            kr += good as f64 / all as f64;
            kr_n += 1;
        }
    }
    let keep_p = if kp_n > 0 { kp / kp_n as f64 } else { 0.0 };
    let keep_r = if kr_n > 0 { kr / kr_n as f64 } else { 0.0 };

    // delete (precision only)
    let (mut dp, mut dp_n) = (0.0, 0usize);
    for (g, &sc) in &s {
        let deleted = sc.saturating_sub(get(&c, g));
        if deleted > 0 {
            dp += deleted.saturating_sub(get(&r, g)) as f64 / deleted as f64;
            dp_n += 1;
        }
    }
    let delete = if dp_n > 0 { dp / dp_n as f64 } else { 0.0 };

    // add (set based)
    let added: BTreeSet<_> = c.keys().filter(|g| !s.contains_key(*g)).collect();
    let good = added.iter().filter(|g| r.contains_key(**g)).count();
    let possible = r.keys().filter(|g| !s.contains_key(*g)).count();
    let add_p = if added.is_empty() { 0.0 } else { good as f64 / added.len() as f64 };
    let add_r = if possible == 0 { 0.0 } else { good as f64 / possible as f64 };

    Components { keep: f1(keep_p, keep_r), delete, add: f1(add_p, add_r) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DSariBreakdown {
    /// Mean over orders, before penalties.
    pub keep: f64,
    pub delete: f64,
    pub add: f64,
    pub lp1: f64,
    pub lp2: f64,
    pub slp: f64,
    pub score: f64,
}

fn lower_tokens(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(String::from).collect()
}

pub fn d_sari_breakdown(candidate: &str, reference: &str, source: &str) -> DSariBreakdown {
    let (s, c, r) = (lower_tokens(source), lower_tokens(candidate), lower_tokens(reference));
    let mut sum = Components { keep: 0.0, delete: 0.0, add: 0.0 };
    for n in 1..=4 {
        let k = order_components(&s, &c, &r, n);
        sum.keep += k.keep;
        sum.delete += k.delete;
        sum.add += k.add;
    }
    let (keep, delete, add) = (sum.keep / 4.0, sum.delete / 4.0, sum.add / 4.0);

    let (o, rl, i) = (c.len() as f64, r.len() as f64, s.len() as f64);
    let lp1 = if o >= rl || o == 0.0 { 1.0 } else { ((o - rl) / o).exp() };
    let lp2 = if o <= rl { 1.0 } else { ((rl - o) / (i - rl).max(1.0)).exp() };
    let so = segment_sentences(candidate).len() as f64;
    let sr = segment_sentences(reference).len() as f64;
    let slp = if so.max(sr) == 0.0 { 1.0 } else { (-(sr - so).abs() / so.max(sr)).exp() };

    let score = 100.0 * (keep * lp2 * slp + delete * lp2 + add * lp1) / 3.0;
    DSariBreakdown { keep, delete, add, lp1, lp2, slp, score }
}

pub fn d_sari(candidate: &str, reference: &str, source: &str) -> f64 {
    d_sari_breakdown(candidate, reference, source).score
}
