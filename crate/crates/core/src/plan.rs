//! Question plans: target selection strategies, assembly, category
//! deletion, and controlled-noise perturbations.
//!
//! Units are EDUs when trees come from a discourse parser and sentences
//! when pairs come from the signal-word extractor. Every random choice runs
//! on ChaCha8 seeded from a `u64`, so a seed reproduces the same plan on any
//! platform.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rst::{ExplanatoryPair, RelationCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Explanatory,
    Lead3,
    LeadK,
    Tail3,
    TailK,
    Random3,
    RandomK,
    AllEdus,
    NonExpEdus,
}

impl Strategy {
    pub const ALL: [Strategy; 9] = [
        Strategy::Explanatory,
        Strategy::Lead3,
        Strategy::LeadK,
        Strategy::Tail3,
        Strategy::TailK,
        Strategy::Random3,
        Strategy::RandomK,
        Strategy::AllEdus,
        Strategy::NonExpEdus,
    ];

    pub fn is_random(self) -> bool {
        matches!(self, Strategy::Random3 | Strategy::RandomK)
    }

    pub fn uses_pairs(self) -> bool {
        matches!(self, Strategy::Explanatory | Strategy::NonExpEdus)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Explanatory => "explanatory",
            Strategy::Lead3 => "lead-3",
            Strategy::LeadK => "lead-k",
            Strategy::Tail3 => "tail-3",
            Strategy::TailK => "tail-k",
            Strategy::Random3 => "random-3",
            Strategy::RandomK => "random-k",
            Strategy::AllEdus => "all-edus",
            Strategy::NonExpEdus => "nonexp-edus",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_alphanumeric()).collect::<String>().to_lowercase();
        Ok(match key.as_str() {
            "explanatory" | "exp" => Strategy::Explanatory,
            "lead3" => Strategy::Lead3,
            "leadk" => Strategy::LeadK,
            "tail3" => Strategy::Tail3,
            "tailk" => Strategy::TailK,
            "random3" => Strategy::Random3,
            "randomk" => Strategy::RandomK,
            "alledus" | "all" => Strategy::AllEdus,
            "nonexpedus" | "nonexp" => Strategy::NonExpEdus,
            _ => return Err(Error::invalid(format!("unknown strategy `{s}`"))),
        })
    }
}

/// Unit granularity for targets and context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Edu,
    #[default]
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetContext {
    pub target_index: usize,
    /// Always `0..target_index`.
    pub context_indices: Vec<usize>,
    /// Set for targets that come from an explanatory pair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<RelationCategory>,
}

impl TargetContext {
    fn new(target_index: usize, category: Option<RelationCategory>) -> Self {
        Self {
            target_index,
            context_indices: (0..target_index).collect(),
            category,
        }
    }

    /// (context, target) text, context being the space-joined prefix.
    pub fn texts<S: AsRef<str>>(&self, units: &[S]) -> (String, String) {
        let context = self
            .context_indices
            .iter()
            .map(|&i| units[i].as_ref())
            .collect::<Vec<_>>()
            .join(" ");
        (context, units[self.target_index].as_ref().to_string())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Picks plan targets over `unit_count` units.
///
/// `k` sizes the `*K` strategies; `pairs` feed `Explanatory` and
/// `NonExpEdus`; `seed` drives the `Random*` strategies.
pub fn select_targets(
    strategy: Strategy,
    unit_count: usize,
    k: usize,
    pairs: &[ExplanatoryPair],
    seed: Option<u64>,
) -> Result<Vec<TargetContext>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if strategy.is_random() && seed.is_none() {
        return Err(Error::invalid(format!("strategy {strategy} requires a seed")));
    }
    if let Some(p) = pairs
        .iter()
        .find(|p| p.explanatory_edu >= unit_count || p.target_edu >= unit_count)
    {
        if strategy.uses_pairs() {
            return Err(Error::invalid(format!(
                "pair ({}, {}) refers past the {unit_count} unit(s)",
                p.explanatory_edu, p.target_edu
            )));
        }
    }
    if unit_count == 0 {
        return Ok(Vec::new());
    }

    let plain = |idx: Vec<usize>| idx.into_iter().map(|i| TargetContext::new(i, None)).collect();
    let lead = |n: usize| (0..n.min(unit_count)).collect::<Vec<_>>();
    let tail = |n: usize| (unit_count - n.min(unit_count)..unit_count).collect::<Vec<_>>();
    let random = |n: usize| {
        let mut rng = rng(seed.expect("checked above"));
        let mut idx = sample(&mut rng, unit_count, n.min(unit_count)).into_vec();
        idx.sort_unstable();
        idx
    };

    Ok(match strategy {
        Strategy::Lead3 => plain(lead(3)),
        Strategy::LeadK => plain(lead(k)),
        Strategy::Tail3 => plain(tail(3)),
        Strategy::TailK => plain(tail(k)),
        Strategy::Random3 => plain(random(3)),
        Strategy::RandomK => plain(random(k)),
        Strategy::AllEdus => plain((0..unit_count).collect()),
        Strategy::NonExpEdus => {
            let explanatory: BTreeSet<usize> = pairs.iter().map(|p| p.explanatory_edu).collect();
            plain((0..unit_count).filter(|i| !explanatory.contains(i)).collect())
        }
        Strategy::Explanatory => {
            let mut ordered: Vec<&ExplanatoryPair> = pairs.iter().collect();
            ordered.sort_by_key(|p| p.appearance_position);
            ordered
                .into_iter()
                .map(|p| TargetContext::new(p.target_edu, Some(p.category)))
                .collect()
        }
    })
}

/// Ceiling of the mean, at least 1.
pub fn compute_k(pair_counts: &[u64]) -> Result<usize> {
    if pair_counts.is_empty() {
        return Err(Error::invalid("compute_k needs at least one count"));
    }
    let n = pair_counts.len() as u128;
    let sum: u128 = pair_counts.iter().map(|&c| c as u128).sum();
    Ok(sum.div_ceil(n).max(1) as usize)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanQuestion {
    pub text: String,
    pub category: Option<RelationCategory>,
    pub source_target_index: usize,
    pub order: usize,
    /// The text was repaired (trailing `?` appended or line breaks folded).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub strategy: Strategy,
    #[serde(default)]
    pub seed: Option<u64>,
    pub questions: Vec<PlanQuestion>,
}

impl Plan {
    pub fn empty(strategy: Strategy) -> Self {
        Self { strategy, seed: None, questions: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.questions.iter().map(|q| q.text.as_str())
    }

    fn renumber(&mut self) {
        for (i, q) in self.questions.iter_mut().enumerate() {
            q.order = i;
        }
    }
}

/// Folds a generated question onto one line ending in `?`.
/// Returns the cleaned text and whether anything had to change.
pub fn normalize_question(raw: &str) -> Result<(String, bool)> {
    let folded = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if folded.is_empty() {
        return Err(Error::invalid("question text is empty"));
    }
    let mut changed = folded != raw;
    let text = if folded.ends_with('?') {
        folded
    } else {
        changed = true;
        format!("{folded}?")
    };
    Ok((text, changed))
}

/// Pairs each target with its generated question, in target order.
pub fn assemble_plan(
    targets: &[TargetContext],
    questions: &[String],
    strategy: Strategy,
    seed: Option<u64>,
) -> Result<Plan> {
    if targets.len() != questions.len() {
        return Err(Error::invalid(format!(
            "{} target(s) but {} question(s)",
            targets.len(),
            questions.len()
        )));
    }
    let questions = targets
        .iter()
        .zip(questions)
        .enumerate()
        .map(|(order, (t, q))| {
            let (text, normalized) = normalize_question(q)?;
            if normalized {
                tracing::debug!(order, "question normalized");
            }
            Ok(PlanQuestion {
                text,
                category: if strategy == Strategy::Explanatory { t.category } else { None },
                source_target_index: t.target_index,
                order,
                normalized,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Plan { strategy, seed, questions })
}

/// Drops every question of one explanatory category; the rest keep their order.
pub fn delete_by_category(plan: &Plan, category: RelationCategory) -> Result<Plan> {
    if !category.is_explanatory() {
        return Err(Error::invalid("only explanatory categories can be deleted"));
    }
    if plan.strategy != Strategy::Explanatory {
        return Err(Error::invalid(format!(
            "plan built with {} carries no categories",
            plan.strategy
        )));
    }
    let mut out = plan.clone();
    out.questions.retain(|q| q.category != Some(category));
    out.renumber();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Replace `count` randomly chosen items.
    RandomReplacement,
    /// Replace every item.
    FullRandomReplacement,
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rr" | "random-replacement" => Ok(Perturbation::RandomReplacement),
            "frr" | "full-random-replacement" => Ok(Perturbation::FullRandomReplacement),
            _ => Err(Error::invalid(format!("unknown perturbation mode `{s}`"))),
        }
    }
}

fn replacement_count(mode: Perturbation, count: Option<usize>, available: usize) -> Result<usize> {
    match mode {
        Perturbation::FullRandomReplacement => Ok(available),
        Perturbation::RandomReplacement => {
            let c = count.ok_or_else(|| Error::invalid("random replacement needs a count"))?;
            if c == 0 || c > available {
                return Err(Error::invalid(format!("count {c} outside 1..={available}")));
            }
            Ok(c)
        }
    }
}

/// Swaps explanatory units for units that are neither explanatory nor a
/// target in any pair. Targets and pair order are untouched; each replaced
/// explanatory unit gets its own distinct pool unit.
pub fn perturb_pairs(
    pairs: &[ExplanatoryPair],
    unit_count: usize,
    mode: Perturbation,
    count: Option<usize>,
    seed: u64,
) -> Result<Vec<ExplanatoryPair>> {
    let explanatory: Vec<usize> = pairs
        .iter()
        .map(|p| p.explanatory_edu)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let used: BTreeSet<usize> = pairs
        .iter()
        .flat_map(|p| [p.explanatory_edu, p.target_edu])
        .collect();
    let pool: Vec<usize> = (0..unit_count).filter(|i| !used.contains(i)).collect();

    let n = replacement_count(mode, count, explanatory.len())?;
    if pool.is_empty() {
        return Err(Error::invalid(
            "replacement pool is empty: every unit is explanatory or a target",
        ));
    }
    if pool.len() < n {
        return Err(Error::invalid(format!(
            "replacement pool has {} unit(s) but {n} distinct replacement(s) are needed",
            pool.len()
        )));
    }

    let mut rng = rng(seed);
    let mut chosen = sample(&mut rng, explanatory.len(), n).into_vec();
    chosen.sort_unstable();
    let draws = sample(&mut rng, pool.len(), n).into_vec();
    let mapping: Vec<(usize, usize)> = chosen
        .iter()
        .zip(draws)
        .map(|(&c, d)| (explanatory[c], pool[d]))
        .collect();

    Ok(pairs
        .iter()
        .map(|p| {
            let mut p = *p;
            if let Some(&(_, to)) = mapping.iter().find(|(from, _)| *from == p.explanatory_edu) {
                p.explanatory_edu = to;
            }
            p
        })
        .collect())
}

/// Substitutes plan questions with distinct texts drawn from `pool`.
/// Replaced questions keep their slot and lose their category.
pub fn perturb_questions(
    plan: &Plan,
    pool: &[String],
    mode: Perturbation,
    count: Option<usize>,
    seed: u64,
) -> Result<Plan> {
    let n = replacement_count(mode, count, plan.questions.len())?;
    if pool.len() < n {
        return Err(Error::invalid(format!(
            "irrelevant-question pool has {} entr(ies) but {n} are needed",
            pool.len()
        )));
    }
    let mut rng = rng(seed);
    let mut slots = sample(&mut rng, plan.questions.len(), n).into_vec();
    slots.sort_unstable();
    let draws = sample(&mut rng, pool.len(), n).into_vec();

    let mut out = plan.clone();
    for (slot, d) in slots.into_iter().zip(draws) {
        let (text, normalized) = normalize_question(&pool[d])?;
        let q = &mut out.questions[slot];
        q.text = text;
        q.normalized = normalized;
        q.category = None;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(e: usize, t: usize, c: RelationCategory, pos: usize) -> ExplanatoryPair {
        ExplanatoryPair { explanatory_edu: e, target_edu: t, category: c, appearance_position: pos }
    }

    fn idx(t: &[TargetContext]) -> Vec<usize> {
        t.iter().map(|t| t.target_index).collect()
    }

    #[test]
    fn lead3_with_prefix_context() {
        let t = select_targets(Strategy::Lead3, 5, 1, &[], None).unwrap();
        assert_eq!(idx(&t), [0, 1, 2]);
        assert_eq!(t[0].context_indices, Vec::<usize>::new());
        assert_eq!(t[2].context_indices, [0, 1]);
    }

    #[test]
    fn short_documents_and_errors() {
        assert_eq!(idx(&select_targets(Strategy::Tail3, 2, 1, &[], None).unwrap()), [0, 1]);
        assert!(select_targets(Strategy::AllEdus, 0, 1, &[], None).unwrap().is_empty());
        assert!(select_targets(Strategy::Lead3, 5, 0, &[], None).is_err());
        assert!(select_targets(Strategy::Random3, 5, 3, &[], None).is_err());
    }

    #[test]
    fn random_is_seeded() {
        let a = select_targets(Strategy::Random3, 10, 3, &[], Some(7)).unwrap();
        let b = select_targets(Strategy::Random3, 10, 3, &[], Some(7)).unwrap();
        assert_eq!(a, b);
        let i = idx(&a);
        assert!(i.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn nonexp_is_set_difference() {
        let pairs = [
            pair(2, 1, RelationCategory::Elaboration, 0),
            pair(4, 3, RelationCategory::Explanation, 1),
        ];
        let t = select_targets(Strategy::NonExpEdus, 6, 1, &pairs, None).unwrap();
        assert_eq!(idx(&t), [0, 1, 3, 5]);
    }

    #[test]
    fn k_is_ceiling_of_mean() {
        assert_eq!(compute_k(&[7, 8, 7, 8]).unwrap(), 8);
        assert_eq!(compute_k(&[3, 3, 3, 3, 4]).unwrap(), 4); // mean 3.2
        assert_eq!(compute_k(&[0, 0]).unwrap(), 1);
        assert!(compute_k(&[]).is_err());
    }

    #[test]
    fn assemble_normalizes() {
        let t = select_targets(Strategy::Lead3, 3, 1, &[], None).unwrap();
        let q: Vec<String> = vec!["Why?".into(), "What next".into(), " How\nso? ".into()];
        let p = assemble_plan(&t, &q, Strategy::Lead3, None).unwrap();
        assert_eq!(p.questions.iter().map(|q| q.order).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(p.questions[1].text, "What next?");
        assert!(p.questions[1].normalized && !p.questions[0].normalized);
        assert_eq!(p.questions[2].text, "How so?");
        assert!(assemble_plan(&t, &q[..2], Strategy::Lead3, None).is_err());
        assert!(assemble_plan(&[], &[], Strategy::Explanatory, None).unwrap().is_empty());
    }

    #[test]
    fn deletion() {
        use RelationCategory::*;
        let pairs: Vec<_> = [Background, Comparison, Elaboration, Explanation]
            .into_iter()
            .enumerate()
            .map(|(i, c)| pair(i + 1, i, c, i))
            .collect();
        let t = select_targets(Strategy::Explanatory, 5, 1, &pairs, None).unwrap();
        let q: Vec<String> = (0..4).map(|i| format!("q{i}?")).collect();
        let plan = assemble_plan(&t, &q, Strategy::Explanatory, None).unwrap();
        let d = delete_by_category(&plan, Comparison).unwrap();
        assert_eq!(d.texts().collect::<Vec<_>>(), ["q0?", "q2?", "q3?"]);
        assert_eq!(d.questions.iter().map(|q| q.order).collect::<Vec<_>>(), [0, 1, 2]);
        let once = delete_by_category(&d, Comparison).unwrap();
        assert_eq!(once, d);
        assert!(delete_by_category(&plan, Other).is_err());
        let lead = Plan::empty(Strategy::Lead3);
        assert!(delete_by_category(&lead, Background).is_err());
    }

    #[test]
    fn pair_perturbation() {
        use RelationCategory::*;
        let pairs = vec![pair(1, 0, Elaboration, 0), pair(3, 2, Explanation, 1), pair(5, 4, Background, 2)];
        let frr = perturb_pairs(&pairs, 10, Perturbation::FullRandomReplacement, None, 1).unwrap();
        for (a, b) in pairs.iter().zip(&frr) {
            assert_eq!(a.target_edu, b.target_edu);
            assert!(b.explanatory_edu >= 6);
        }
        let a = perturb_pairs(&pairs, 10, Perturbation::RandomReplacement, Some(1), 9).unwrap();
        let b = perturb_pairs(&pairs, 10, Perturbation::RandomReplacement, Some(1), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().zip(&pairs).filter(|(x, y)| x != y).count(), 1);
        assert!(perturb_pairs(&pairs, 6, Perturbation::FullRandomReplacement, None, 1).is_err());
        assert!(perturb_pairs(&pairs, 10, Perturbation::RandomReplacement, Some(0), 1).is_err());
        assert!(perturb_pairs(&pairs, 10, Perturbation::RandomReplacement, Some(4), 1).is_err());
    }

    #[test]
    fn question_perturbation() {
        let t = select_targets(Strategy::AllEdus, 4, 1, &[], None).unwrap();
        let q: Vec<String> = (0..4).map(|i| format!("q{i}?")).collect();
        let plan = assemble_plan(&t, &q, Strategy::AllEdus, None).unwrap();
        let pool: Vec<String> = (0..4).map(|i| format!("irrelevant {i}?")).collect();
        let frr = perturb_questions(&plan, &pool, Perturbation::FullRandomReplacement, None, 3).unwrap();
        assert!(frr.texts().all(|t| t.starts_with("irrelevant")));
        assert_eq!(frr.questions.iter().map(|q| q.order).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert!(perturb_questions(&plan, &pool, Perturbation::RandomReplacement, Some(0), 3).is_err());
        assert!(perturb_questions(&plan, &pool[..1], Perturbation::RandomReplacement, Some(2), 3).is_err());
        let rr = perturb_questions(&plan, &pool, Perturbation::RandomReplacement, Some(2), 3).unwrap();
        assert_eq!(rr.texts().filter(|t| t.starts_with("irrelevant")).count(), 2);
    }
}
