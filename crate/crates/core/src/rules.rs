//! Signal-word extraction of explanatory sentences.
//!
//! A sentence containing a signal phrase is explanatory; its target is the
//! sentence right before it. Phrases marked sentence-initial only count when
//! they open the sentence.

use std::path::Path;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rst::{ExplanatoryPair, RelationCategory};
use crate::segment::Sentence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalPattern {
    pub category: RelationCategory,
    /// Regex source. Sentence-initial patterns carry a leading `^`.
    pub pattern: String,
    pub sentence_initial: bool,
}

const BACKGROUND: &[&str] = &[
    "^historically", "^traditionally", "^previously", "^in the past", "^before", "^initially",
    "^once", "^earlier", "^in the beginning", "^at first", "^prior to", "^originally",
    "^at the outset", "^at the time", "^long ago", "^decades ago", "^in former times",
    "^previously mentioned", "^the history of", "^the origin of", "^in earlier times",
    "^from the outset", "^in the early days", "^over the years", "^long before",
    "^centuries ago", "^during the early stages", "^at that time", "^back then",
    "^once upon a time", "^throughout history", "^previously established",
    "^over the course of history", "^in ancient times",
];

const COMPARISON: &[&str] = &[
    "compared to", "compared with", "^similarly", "likewise", "in contrast", "in comparison",
    "in opposition", "^on the contrary", "^on one hand", "^on the other hand", "^conversely",
    "rather than", "different from", "^unlike", "similar to", "analogous to", "contrary to",
    "in contradistinction", "distinct from", "distinguishable from", "as opposed to",
    "in the same way", "by comparison", "comparable to", "differ(?:s|ed|ing) from",
    "diverg(e|es|ed|ing)? from", "in a similar manner", "in the same vein", "on the flip side",
    "correspondingly", "on a different note", "in opposition to", "different from",
    "in a contrasting way", "in an analogous way",
];

const ELABORATION: &[&str] = &[
    "defined as", "refer(?:s|red|ring)? to", "mean(?:s|t)?", "known as", "definition",
    "^in other words", "^that is to say", "^that's to say", "^this is to say", "^that means",
    "^this means", "^this implies", "^that implies", r"i\.e\.", r"e\.g\.", "for example",
    "for instance", "such as", "^to clarify", "^to explain", "whereas", "^to illustrate",
    "^to elaborate", "^specifically", "^particularly", "in particular", "as an example",
    "by way of example", "more precisely", "^to be specific", "^to exemplify", "namely",
    "by way of illustration", "expounded upon", "in more detail", "one example", "an example",
    "^to add to this",
];

const EXPLANATION: &[&str] = &[
    "because", "due to", "since", "thanks to", "owing to", "for the sake of", "stemming from",
    "given that", "in light of", "for this reason", "for that reason", "for the reason that",
    "for the purpose of", "for this cause", "the reason is", "the reasons are", "as a result",
    "consequently", "as a consequence", "accordingly", "with the result that", "so that",
    "such that", "result(?:s|ed|ing)? in", "result(?:s|ed|ing)? from", "lead(?:s|ed|ing)? to",
    "which means", "thereby", "whereby", "in consequence of", "on account of", "so as to",
    "on the grounds that",
];

/// The built-in signal-word inventory.
pub fn builtin_patterns() -> Vec<SignalPattern> {
    let rows: [(RelationCategory, &[&str]); 4] = [
        (RelationCategory::Background, BACKGROUND),
        (RelationCategory::Comparison, COMPARISON),
        (RelationCategory::Elaboration, ELABORATION),
        (RelationCategory::Explanation, EXPLANATION),
    ];
    rows.into_iter()
        .flat_map(|(category, pats)| {
            pats.iter().map(move |p| SignalPattern {
                category,
                pattern: p.to_string(),
                sentence_initial: p.starts_with('^'),
            })
        })
        .collect()
}

/// Reads `category<TAB>pattern<TAB>initial-flag` lines. `#` starts a comment.
pub fn load_pattern_file(path: &Path) -> Result<Vec<SignalPattern>> {
    let text = std::fs::read_to_string(path)?;
    parse_pattern_file(&text)
}

pub fn parse_pattern_file(text: &str) -> Result<Vec<SignalPattern>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [category, pattern, flag] = cols[..] else {
            return Err(Error::Record {
                line: line_no,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        };
        let category: RelationCategory = category.parse().map_err(|e: Error| Error::Record {
            line: line_no,
            message: e.to_string(),
        })?;
        if !category.is_explanatory() {
            return Err(Error::Record {
                line: line_no,
                message: "patterns must name an explanatory category".into(),
            });
        }
        let sentence_initial = match flag.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" | "y" => true,
            "0" | "false" | "no" | "n" => false,
            other => {
                return Err(Error::Record {
                    line: line_no,
                    message: format!("bad initial-flag `{other}`"),
                })
            }
        };
        let body = pattern.trim_start_matches('^');
        out.push(SignalPattern {
            category,
            pattern: if sentence_initial { format!("^{body}") } else { body.to_string() },
            sentence_initial,
        });
    }
    Ok(out)
}

/// Higher wins when one sentence carries signals of several categories.
fn precedence(c: RelationCategory) -> u8 {
    match c {
        RelationCategory::Explanation => 4,
        RelationCategory::Elaboration => 3,
        RelationCategory::Comparison => 2,
        RelationCategory::Background => 1,
        RelationCategory::Other => 0,
    }
}

#[derive(Debug, Clone)]
struct Compiled {
    spec: SignalPattern,
    regex: Regex,
}

fn compile(p: &SignalPattern) -> Result<Regex> {
    let body = p.pattern.trim_start_matches('^');
    let mut src = String::new();
    if p.sentence_initial {
        src.push_str(r"^\s*");
    }
    if body.starts_with(|c: char| c.is_alphanumeric()) {
        src.push_str(r"\b");
    }
    src.push_str("(?:");
    src.push_str(body);
    src.push(')');
    if !body.ends_with(r"\.") {
        src.push_str(r"\b");
    }
    RegexBuilder::new(&src)
        .case_insensitive(true)
        .build()
        .map_err(|e| Error::invalid(format!("pattern `{}` does not compile: {e}", p.pattern)))
}

/// What made a sentence explanatory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalMatch {
    pub category: RelationCategory,
    pub pattern: String,
    pub matched: String,
    pub char_start: usize,
}

#[derive(Debug, Clone)]
pub struct RuleExtractor {
    patterns: Vec<Compiled>,
}

impl RuleExtractor {
    pub fn new(patterns: &[SignalPattern]) -> Result<Self> {
        let patterns = patterns
            .iter()
            .map(|p| Ok(Compiled { spec: p.clone(), regex: compile(p)? }))
            .collect::<Result<_>>()?;
        Ok(Self { patterns })
    }

    /// The built-in inventory, compiled once per process.
    pub fn builtin() -> Self {
        static BUILTIN: LazyLock<RuleExtractor> =
            LazyLock::new(|| RuleExtractor::new(&builtin_patterns()).expect("built-in patterns compile"));
        BUILTIN.clone()
    }

    pub fn patterns(&self) -> impl Iterator<Item = &SignalPattern> {
        self.patterns.iter().map(|c| &c.spec)
    }

    /// The winning signal in one sentence: highest-precedence category, then leftmost match.
    pub fn classify(&self, sentence: &str) -> Option<SignalMatch> {
        self.patterns
            .iter()
            .filter_map(|c| {
                c.regex.find(sentence).map(|m| {
                    // Skip the leading whitespace consumed by initial anchors.
                    let matched = m.as_str().trim_start();
                    let byte_start = m.end() - matched.len();
                    SignalMatch {
                        category: c.spec.category,
                        pattern: c.spec.pattern.clone(),
                        matched: matched.to_string(),
                        char_start: sentence[..byte_start].chars().count(),
                    }
                })
            })
            .min_by_key(|m| (std::cmp::Reverse(precedence(m.category)), m.char_start))
    }

    /// One pair per signalled sentence, targeting the sentence before it.
    /// The first sentence has no target and is never paired.
    pub fn extract(&self, sentences: &[Sentence]) -> Vec<ExplanatoryPair> {
        self.extract_with_signals(sentences).into_iter().map(|(p, _)| p).collect()
    }

    pub fn extract_with_signals(&self, sentences: &[Sentence]) -> Vec<(ExplanatoryPair, SignalMatch)> {
        let mut out = Vec::new();
        for w in sentences.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            if let Some(m) = self.classify(&cur.text) {
                out.push((
                    ExplanatoryPair {
                        explanatory_edu: cur.index,
                        target_edu: prev.index,
                        category: m.category,
                        appearance_position: out.len(),
                    },
                    m,
                ));
            }
        }
        out
    }
}

/// Convenience wrapper over the built-in inventory.
pub fn extract_pairs_rule_based(sentences: &[Sentence]) -> Vec<ExplanatoryPair> {
    RuleExtractor::builtin().extract(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::segment_sentences;

    fn has(cat: RelationCategory, pat: &str, initial: bool) -> bool {
        builtin_patterns()
            .iter()
            .any(|p| p.category == cat && p.pattern == pat && p.sentence_initial == initial)
    }

    #[test]
    fn inventory() {
        assert!(has(RelationCategory::Background, "^historically", true));
        assert!(has(RelationCategory::Explanation, "because", false));
        assert!(has(RelationCategory::Comparison, "differ(?:s|ed|ing) from", false));
        assert!(has(RelationCategory::Explanation, "result(?:s|ed|ing)? in", false));
        assert_eq!(BACKGROUND.len(), 34);
        assert_eq!(EXPLANATION.len(), 33);
        for p in builtin_patterns() {
            compile(&p).unwrap();
            assert_eq!(p.sentence_initial, p.pattern.starts_with('^'));
        }
    }

    #[test]
    fn as_a_result() {
        let s = segment_sentences("The storm caused flooding. As a result, a state of emergency was declared.");
        let pairs = extract_pairs_rule_based(&s);
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].explanatory_edu, pairs[0].target_edu), (1, 0));
        assert_eq!(pairs[0].category, RelationCategory::Explanation);
    }

    #[test]
    fn first_sentence_has_no_target() {
        let s = segment_sentences("Similarly, birds migrate.");
        assert!(extract_pairs_rule_based(&s).is_empty());
    }

    #[test]
    fn initial_patterns_do_not_fire_mid_sentence() {
        let x = RuleExtractor::builtin();
        assert_eq!(x.classify("Historically, fevers were common.").unwrap().category, RelationCategory::Background);
        assert!(x.classify("Fevers were historically common.").is_none());
        assert!(x.classify("It was similarly large.").is_none());
    }

    #[test]
    fn word_boundaries_and_literal_dots() {
        let x = RuleExtractor::builtin();
        assert!(x.classify("The idea was new.").is_none());
        assert!(x.classify("Meanwhile nothing happened.").is_none());
        assert_eq!(x.classify("Small mammals, i.e. mice, respond.").unwrap().category, RelationCategory::Elaboration);
        assert_eq!(x.classify("Rates differed from the control.").unwrap().category, RelationCategory::Comparison);
    }

    #[test]
    fn precedence_and_leftmost() {
        let x = RuleExtractor::builtin();
        let m = x.classify("Similarly, for example, cells died because of heat.").unwrap();
        assert_eq!(m.category, RelationCategory::Explanation);
        assert_eq!(m.matched, "because");
        let m = x.classify("For example, such as this.").unwrap();
        assert_eq!(m.matched.to_lowercase(), "for example");
        assert_eq!(m.char_start, 0);
    }

    #[test]
    fn pattern_file() {
        let text = "# custom\nExplanation\tbecause\tfalse\nBackground\tformerly\t1\n";
        let pats = parse_pattern_file(text).unwrap();
        assert_eq!(pats[1].pattern, "^formerly");
        let x = RuleExtractor::new(&pats).unwrap();
        assert!(x.classify("Formerly, it was rare.").is_some());
        assert!(matches!(parse_pattern_file("Other\tx\t0"), Err(Error::Record { line: 1, .. })));
        assert!(matches!(parse_pattern_file("Explanation\tx"), Err(Error::Record { line: 1, .. })));
        assert!(RuleExtractor::new(&parse_pattern_file("Explanation\t(unclosed\t0").unwrap()).is_err());
    }
}
