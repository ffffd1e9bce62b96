//! Summary evaluation metrics and per-summary reports.

pub mod dsari;
pub mod fragments;
pub mod rouge;

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rst::ExplanatoryPair;
use crate::rules::RuleExtractor;
use crate::segment::{count_syllables, segment_sentences, tokenize};

pub use dsari::d_sari;
pub use fragments::{extractive_stats, ExtractiveStats};
pub use rouge::rouge_scores;

/// Share of units acting as explanations. With `include_targets`, the
/// targets they explain count too.
pub fn exp_ratio(pairs: &[ExplanatoryPair], total_units: usize, include_targets: bool) -> Result<f64> {
    if total_units == 0 {
        return Err(Error::invalid("total_units must be at least 1"));
    }
    let mut units = BTreeSet::new();
    for p in pairs {
        if p.explanatory_edu >= total_units || p.target_edu >= total_units {
            return Err(Error::invalid(format!(
                "pair ({}, {}) out of range for {total_units} units",
                p.explanatory_edu, p.target_edu
            )));
        }
        units.insert(p.explanatory_edu);
        if include_targets {
            units.insert(p.target_edu);
        }
    }
    Ok(units.len() as f64 / total_units as f64)
}

/// Flesch Reading Ease, unclamped.
pub fn fre(text: &str) -> Result<f64> {
    let sentences = segment_sentences(text).len();
    let words: Vec<_> = tokenize(text).into_iter().filter(|t| t.is_word).collect();
    if words.is_empty() || sentences == 0 {
        return Err(Error::invalid("text has no words"));
    }
    let mut syllables = 0usize;
    for w in &words {
        syllables += count_syllables(&w.text)?;
    }
    let wc = words.len() as f64;
    Ok(206.835 - 1.015 * (wc / sentences as f64) - 84.6 * (syllables as f64 / wc))
}

/// Word and punctuation tokens.
pub fn ast(summary: &str) -> usize {
    tokenize(summary).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub rouge_stemming: bool,
    pub clamp_fre: bool,
    pub exp_ratio_include_targets: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { rouge_stemming: true, clamp_fre: false, exp_ratio_include_targets: false }
    }
}

impl MetricConfig {
    /// Hex SHA-256 over the settings plus an implementation version tag.
    pub fn fingerprint(&self) -> String {
        let body = serde_json::json!({
            "version": "metrics-1",
            "rouge_stemming": self.rouge_stemming,
            "clamp_fre": self.clamp_fre,
            "exp_ratio_include_targets": self.exp_ratio_include_targets,
        });
        crate::fingerprint(&body)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub id: String,
    pub exp_ratio: f64,
    pub fre: f64,
    pub d_sari: f64,
    pub rouge2_f1: f64,
    pub rouge_lsum_f1: f64,
    pub ast: usize,
    pub coverage: f64,
    pub density: f64,
    pub compression: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summac_star: Option<f64>,
    pub config_fingerprint: String,
}

/// Scores `candidate` against its `reference` and `source`. Explanations in
/// the candidate are located with the signal-word extractor over sentences.
pub fn evaluate(
    id: &str,
    candidate: &str,
    reference: &str,
    source: &str,
    extractor: &RuleExtractor,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    for (what, text) in [("candidate", candidate), ("reference", reference), ("source", source)] {
        if text.trim().is_empty() {
            return Err(Error::invalid(format!("{what} is empty")));
        }
    }
    let sentences = segment_sentences(candidate);
    let pairs = extractor.extract(&sentences);
    let mut fre_score = fre(candidate)?;
    if cfg.clamp_fre {
        fre_score = fre_score.clamp(0.0, 100.0);
    }
    let (rouge2_f1, rouge_lsum_f1) = rouge_scores(candidate, reference, cfg.rouge_stemming);
    let stats = extractive_stats(source, candidate)?;
    Ok(MetricReport {
        id: id.to_string(),
        exp_ratio: exp_ratio(&pairs, sentences.len(), cfg.exp_ratio_include_targets)?,
        fre: fre_score,
        d_sari: d_sari(candidate, reference, source),
        rouge2_f1,
        rouge_lsum_f1,
        ast: ast(candidate),
        coverage: stats.coverage,
        density: stats.density,
        compression: stats.compression,
        summac: None,
        summac_star: None,
        config_fingerprint: cfg.fingerprint(),
    })
}

pub const AGGREGATE_COLUMNS: [&str; 7] = ["R2", "RLsum", "D-SARI", "FRE", "ExpRatio", "AST", "SummaC/SummaC*"];

/// Means over reports in the column order of the paper's results table,
/// on the same scale (percentages for ROUGE, ExpRatio and SummaC).
pub fn aggregate_row(reports: &[MetricReport]) -> Result<Vec<String>> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to aggregate"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let opt_mean = |f: &dyn Fn(&MetricReport) -> Option<f64>| {
        let v: Option<Vec<f64>> = reports.iter().map(f).collect();
        v.map(|v| 100.0 * v.iter().sum::<f64>() / n)
    };
    let summac = match (opt_mean(&|r| r.summac), opt_mean(&|r| r.summac_star)) {
        (Some(a), Some(b)) => format!("{a:.2}/{b:.2}"),
        (Some(a), None) => format!("{a:.2}/---"),
        _ => "---".to_string(),
    };
    Ok(vec![
        format!("{:.2}", 100.0 * mean(&|r| r.rouge2_f1)),
        format!("{:.2}", 100.0 * mean(&|r| r.rouge_lsum_f1)),
        format!("{:.2}", mean(&|r| r.d_sari)),
        format!("{:.2}", mean(&|r| r.fre)),
        format!("{:.2}", 100.0 * mean(&|r| r.exp_ratio)),
        format!("{:.2}", mean(&|r| r.ast as f64)),
        summac,
    ])
}

/// Writes a header line and one aggregate row, tab-separated.
pub fn write_aggregate(out: &mut impl Write, label: &str, reports: &[MetricReport]) -> Result<()> {
    let row = aggregate_row(reports)?;
    writeln!(out, "Model\t{}", AGGREGATE_COLUMNS.join("\t"))?;
    writeln!(out, "{label}\t{}", row.join("\t"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rst::RelationCategory;

    fn pair(e: usize, t: usize) -> ExplanatoryPair {
        ExplanatoryPair { explanatory_edu: e, target_edu: t, category: RelationCategory::Explanation, appearance_position: 0 }
    }

    #[test]
    fn exp_ratio_cases() {
        assert_eq!(exp_ratio(&[pair(3, 2), pair(5, 4)], 10, false).unwrap(), 0.2);
        assert_eq!(exp_ratio(&[], 10, false).unwrap(), 0.0);
        assert_eq!(exp_ratio(&[pair(3, 2), pair(3, 2)], 10, false).unwrap(), 0.1);
        assert_eq!(exp_ratio(&[pair(3, 2)], 10, true).unwrap(), 0.2);
        assert!(exp_ratio(&[], 0, false).is_err());
        assert!(exp_ratio(&[pair(10, 2)], 10, false).is_err());
    }

    #[test]
    fn fre_cat_sat() {
        assert_eq!(fre("The cat sat on the mat.").unwrap(), 206.835 - 1.015 * 6.0 - 84.6);
        assert!((fre("The cat sat on the mat.").unwrap() - 116.145).abs() < 1e-9);
        let one = fre("Birds migrate south in winter.").unwrap();
        let two = fre("Birds migrate south in winter. Birds migrate south in winter.").unwrap();
        assert!((one - two).abs() < 1e-9);
        assert!(fre("...").is_err());
    }

    #[test]
    fn ast_counts_punctuation() {
        assert_eq!(ast(""), 0);
        assert_eq!(ast("Hello, world."), 4);
    }

    #[test]
    fn fingerprint_tracks_settings() {
        let a = MetricConfig::default();
        let b = MetricConfig { clamp_fre: true, ..Default::default() };
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), MetricConfig::default().fingerprint());
    }

    #[test]
    fn report_ranges() {
        let src = "The cerebellum coordinates movement. It sits at the back of the brain. Damage causes tremors.";
        let refr = "The cerebellum helps us move smoothly. This is because it fine-tunes signals.";
        let cand = "The cerebellum coordinates movement. This is because it adjusts timing.";
        let r = evaluate("x", cand, refr, src, &RuleExtractor::builtin(), &MetricConfig::default()).unwrap();
        assert_eq!(r.exp_ratio, 0.5);
        assert!(r.density >= r.coverage && (0.0..=1.0).contains(&r.coverage));
        assert!((0.0..=100.0).contains(&r.d_sari));
        let row = aggregate_row(&[r]).unwrap();
        assert_eq!(row.len(), AGGREGATE_COLUMNS.len());
        assert_eq!(row[4], "50.00");
    }
}
