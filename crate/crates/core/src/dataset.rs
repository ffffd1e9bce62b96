//! Corpus records, plan augmentation, training-file formats and corpus
//! statistics.
//!
//! Corpora are JSONL with `{id, document, summary, split}` plus optional
//! `plan` and `pairs` once augmented.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{AlignedPair, Gateway, GeneratedQuestion};
use crate::metrics::fragments::{extractive_stats_tokens, stat_tokens};
use crate::plan::{assemble_plan, select_targets, Plan, Strategy};
use crate::rst::{ExplanatoryPair, ParsedDocument, RelationCategory};
use crate::rules::RuleExtractor;
use crate::segment::segment_sentences;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub document: String,
    pub summary: String,
    pub split: Split,
}

impl DatasetRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.document.trim().is_empty() {
            return Err(format!("record {}: empty document", self.id));
        }
        if self.summary.trim().is_empty() {
            return Err(format!("record {}: empty summary", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    RstInterchange,
    RuleBased,
    LlmDirect,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::RstInterchange => "rst-interchange",
            Provenance::RuleBased => "rule-based",
            Provenance::LlmDirect => "llm-direct",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    #[serde(flatten)]
    pub base: DatasetRecord,
    pub plan: Plan,
    pub pairs: Vec<ExplanatoryPair>,
    #[serde(rename = "provenance")]
    pub extractor_provenance: Provenance,
}

/// What to do with a malformed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnError {
    #[default]
    Fail,
    Skip,
}

/// Streams JSONL records, one at a time, with 1-based line numbers.
pub struct JsonlReader<R, T> {
    lines: std::io::Lines<R>,
    line: usize,
    policy: OnError,
    skipped: usize,
    _t: std::marker::PhantomData<T>,
}

impl<R: BufRead, T: DeserializeOwned> JsonlReader<R, T> {
    pub fn new(reader: R, policy: OnError) -> Self {
        Self { lines: reader.lines(), line: 0, policy, skipped: 0, _t: std::marker::PhantomData }
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn next_line(&mut self) -> Option<Result<(usize, T)>> {
        loop {
            let raw = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if raw.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<T>(&raw) {
                Ok(v) => return Some(Ok((self.line, v))),
                Err(e) => match self.handle(e.to_string()) {
                    Some(err) => return Some(Err(err)),
                    None => continue,
                },
            }
        }
    }

    /// Returns the error to surface, or `None` after logging a skip.
    fn handle(&mut self, message: String) -> Option<Error> {
        match self.policy {
            OnError::Fail => Some(Error::Record { line: self.line, message }),
            OnError::Skip => {
                tracing::warn!(line = self.line, "skipping record: {message}");
                self.skipped += 1;
                None
            }
        }
    }
}

impl<R: BufRead, T: DeserializeOwned> Iterator for JsonlReader<R, T> {
    type Item = Result<(usize, T)>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_line()
    }
}

/// Streams validated corpus records, optionally restricted to one split.
/// Ids must be unique within a split.
pub struct CorpusReader<R> {
    inner: JsonlReader<R, DatasetRecord>,
    split: Option<Split>,
    seen: HashSet<u64>,
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<DatasetRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (_, rec) = match self.inner.next()? {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            let mut h = DefaultHasher::new();
            (rec.split, &rec.id).hash(&mut h);
            let problem = match rec.validate() {
                Err(m) => Some(m),
                Ok(()) if !self.seen.insert(h.finish()) => Some(format!("duplicate id {} in {}", rec.id, rec.split)),
                Ok(()) => None,
            };
            if let Some(message) = problem {
                match self.inner.handle(message) {
                    Some(err) => return Some(Err(err)),
                    None => continue,
                }
            }
            if self.split.is_none_or(|s| s == rec.split) {
                return Some(Ok(rec));
            }
        }
    }
}

impl<R> CorpusReader<R> {
    pub fn skipped(&self) -> usize {
        self.inner.skipped
    }
}

pub fn corpus_reader<R: BufRead>(reader: R, split: Option<Split>, policy: OnError) -> CorpusReader<R> {
    CorpusReader { inner: JsonlReader::new(reader, policy), split, seen: HashSet::new() }
}

pub fn load_corpus(path: &Path, split: Option<Split>, policy: OnError) -> Result<CorpusReader<BufReader<File>>> {
    Ok(corpus_reader(BufReader::new(File::open(path)?), split, policy))
}

pub fn write_jsonl<T: Serialize>(out: &mut impl Write, items: impl IntoIterator<Item = T>) -> Result<usize> {
    let mut n = 0;
    for item in items {
        serde_json::to_writer(&mut *out, &item)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    Ok(n)
}

/// Plan units of a summary together with the explanatory pairs over them.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub units: Vec<String>,
    pub pairs: Vec<ExplanatoryPair>,
}

pub trait PairExtractor: Sync {
    fn provenance(&self) -> Provenance;
    fn extract(&self, record: &DatasetRecord) -> Result<Extracted>;
}

impl PairExtractor for RuleExtractor {
    fn provenance(&self) -> Provenance {
        Provenance::RuleBased
    }

    fn extract(&self, record: &DatasetRecord) -> Result<Extracted> {
        let sentences = segment_sentences(&record.summary);
        let pairs = RuleExtractor::extract(self, &sentences);
        Ok(Extracted { units: sentences.into_iter().map(|s| s.text).collect(), pairs })
    }
}

/// Pairs from parser output keyed by record id.
pub struct InterchangeExtractor {
    pub parses: std::collections::HashMap<String, ParsedDocument>,
}

impl PairExtractor for InterchangeExtractor {
    fn provenance(&self) -> Provenance {
        Provenance::RstInterchange
    }

    fn extract(&self, record: &DatasetRecord) -> Result<Extracted> {
        let doc = self
            .parses
            .get(&record.id)
            .ok_or_else(|| Error::invalid(format!("no discourse parse for record {}", record.id)))?;
        let extraction = crate::rst::extract_explanatory_pairs(&doc.tree, &doc.edus)?;
        Ok(Extracted { units: doc.edus.iter().map(|e| e.text.clone()).collect(), pairs: extraction.pairs })
    }
}

/// Pairs read directly off a model completion, aligned to summary sentences.
pub struct LlmExtractor<'a> {
    pub gateway: &'a Gateway,
    pub classifier: RuleExtractor,
}

/// Category of a model-extracted pair: the signal-word class of the
/// explanatory sentence, `Elaboration` when no signal fires.
pub fn pairs_from_alignment(aligned: &[AlignedPair], units: &[String], classifier: &RuleExtractor) -> Vec<ExplanatoryPair> {
    let mut pairs: Vec<ExplanatoryPair> = aligned
        .iter()
        .map(|a| ExplanatoryPair {
            explanatory_edu: a.explanatory_index,
            target_edu: a.target_index,
            category: classifier
                .classify(&units[a.explanatory_index])
                .map_or(RelationCategory::Elaboration, |m| m.category),
            appearance_position: 0,
        })
        .collect();
    pairs.sort_by_key(|p| (p.explanatory_edu, p.target_edu));
    pairs.dedup_by_key(|p| (p.explanatory_edu, p.target_edu));
    for (i, p) in pairs.iter_mut().enumerate() {
        p.appearance_position = i;
    }
    pairs
}

impl PairExtractor for LlmExtractor<'_> {
    fn provenance(&self) -> Provenance {
        Provenance::LlmDirect
    }

    fn extract(&self, record: &DatasetRecord) -> Result<Extracted> {
        let units: Vec<String> = segment_sentences(&record.summary).into_iter().map(|s| s.text).collect();
        let aligned = match self.gateway.extract_pairs_llm(&record.summary) {
            Ok(a) => a,
            Err(Error::Alignment) => Vec::new(),
            Err(e) => return Err(e),
        };
        let low: Vec<_> = aligned.iter().filter(|a| !a.exact).collect();
        if !low.is_empty() {
            tracing::info!(id = %record.id, fuzzy = low.len(), "pairs aligned by overlap");
        }
        let pairs = pairs_from_alignment(&aligned, &units, &self.classifier);
        Ok(Extracted { units, pairs })
    }
}

pub trait QuestionSource: Sync {
    fn question(&self, context: &str, target: &str) -> Result<GeneratedQuestion>;
}

impl QuestionSource for Gateway {
    fn question(&self, context: &str, target: &str) -> Result<GeneratedQuestion> {
        self.generate_question(context, target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanSpec {
    pub strategy: Strategy,
    pub k: usize,
    pub seed: Option<u64>,
}

/// Builds a plan over already extracted units.
pub fn build_plan(extracted: &Extracted, spec: &PlanSpec, questions: &dyn QuestionSource) -> Result<Plan> {
    let seed = if spec.strategy.is_random() { spec.seed } else { None };
    let targets = select_targets(spec.strategy, extracted.units.len(), spec.k, &extracted.pairs, seed)?;
    let mut texts = Vec::with_capacity(targets.len());
    for t in &targets {
        let (context, target) = t.texts(&extracted.units);
        texts.push(questions.question(&context, &target)?.text);
    }
    assemble_plan(&targets, &texts, spec.strategy, seed)
}

/// (document, summary) → (document, plan, summary). Errors carry the record id.
pub fn augment(
    record: DatasetRecord,
    extractor: &dyn PairExtractor,
    questions: &dyn QuestionSource,
    spec: &PlanSpec,
) -> Result<AugmentedRecord> {
    let in_record = |e: Error| Error::InRecord { id: record.id.clone(), source: Box::new(e) };
    let extracted = extractor.extract(&record).map_err(in_record)?;
    let plan = build_plan(&extracted, spec, questions).map_err(in_record)?;
    Ok(AugmentedRecord { base: record, plan, pairs: extracted.pairs, extractor_provenance: extractor.provenance() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatVariant {
    PlanOutput,
    PlanInputPg,
    PlanInputSg,
}

impl FormatVariant {
    pub const ALL: [FormatVariant; 3] = [FormatVariant::PlanOutput, FormatVariant::PlanInputPg, FormatVariant::PlanInputSg];

    pub fn as_str(self) -> &'static str {
        match self {
            FormatVariant::PlanOutput => "plan-output",
            FormatVariant::PlanInputPg => "plan-input-pg",
            FormatVariant::PlanInputSg => "plan-input-sg",
        }
    }
}

impl fmt::Display for FormatVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "plan-output" | "planoutput" => Ok(FormatVariant::PlanOutput),
            "plan-input-pg" | "planinputpg" | "pg" => Ok(FormatVariant::PlanInputPg),
            "plan-input-sg" | "planinputsg" | "sg" => Ok(FormatVariant::PlanInputSg),
            _ => Err(Error::invalid(format!("unknown format `{s}`"))),
        }
    }
}

pub const SUMMARY_SEPARATOR: &str = "### SUMMARY ###";
const PLAN_HEADER: &str = "\n\nPlanning Questions:\n";

/// `q1: ...` lines, one per question.
pub fn plan_block<'a>(questions: impl IntoIterator<Item = &'a str>) -> String {
    questions
        .into_iter()
        .enumerate()
        .map(|(i, q)| format!("q{}: {q}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn parse_plan_block(block: &str) -> Result<Vec<String>> {
    if block.is_empty() {
        return Ok(Vec::new());
    }
    block
        .split('\n')
        .enumerate()
        .map(|(i, line)| {
            let prefix = format!("q{}: ", i + 1);
            line.strip_prefix(&prefix)
                .map(str::to_string)
                .ok_or_else(|| Error::invalid(format!("plan line {} lacks `{prefix}`: {line:?}", i + 1)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub id: String,
    pub split: Split,
    pub format: FormatVariant,
    pub input: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub empty_plan: bool,
}

pub fn training_record(rec: &AugmentedRecord, variant: FormatVariant) -> TrainingRecord {
    let block = plan_block(rec.plan.texts());
    let b = &rec.base;
    let (input, target) = match variant {
        FormatVariant::PlanOutput if block.is_empty() => (b.document.clone(), format!("{SUMMARY_SEPARATOR}\n{}", b.summary)),
        FormatVariant::PlanOutput => (b.document.clone(), format!("{block}\n{SUMMARY_SEPARATOR}\n{}", b.summary)),
        FormatVariant::PlanInputPg => (b.document.clone(), block),
        FormatVariant::PlanInputSg => (format!("{}{PLAN_HEADER}{block}", b.document), b.summary.clone()),
    };
    TrainingRecord { id: b.id.clone(), split: b.split, format: variant, input, target, empty_plan: rec.plan.is_empty() }
}

/// Writes one training example per record; returns the count written.
pub fn emit_training<'a>(
    records: impl IntoIterator<Item = &'a AugmentedRecord>,
    variant: FormatVariant,
    out: &mut impl Write,
) -> Result<usize> {
    let mut empty = 0;
    let n = write_jsonl(
        out,
        records.into_iter().map(|r| {
            let t = training_record(r, variant);
            empty += usize::from(t.empty_plan);
            t
        }),
    )?;
    if empty > 0 {
        tracing::info!(empty, "records written with an empty plan");
    }
    Ok(n)
}

pub fn emit_training_file<'a>(
    records: impl IntoIterator<Item = &'a AugmentedRecord>,
    variant: FormatVariant,
    path: &Path,
) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = emit_training(records, variant, &mut w)?;
    w.flush()?;
    Ok(n)
}

/// What a training example says about its source record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTraining {
    pub document: String,
    pub questions: Vec<String>,
    /// Absent for the plan-generation half of the pipeline.
    pub summary: Option<String>,
}

pub fn parse_training_record(t: &TrainingRecord) -> Result<ParsedTraining> {
    match t.format {
        FormatVariant::PlanOutput => {
            let stripped = strip_plan(&t.target, FormatVariant::PlanOutput);
            if !stripped.separator_found {
                return Err(Error::invalid(format!("record {}: target has no separator", t.id)));
            }
            let block = t.target[..t.target.len() - stripped.summary.len()]
                .strip_suffix(&format!("{SUMMARY_SEPARATOR}\n"))
                .expect("separator precedes summary");
            let block = block.strip_suffix('\n').unwrap_or(block);
            Ok(ParsedTraining {
                document: t.input.clone(),
                questions: parse_plan_block(block)?,
                summary: Some(stripped.summary),
            })
        }
        FormatVariant::PlanInputPg => Ok(ParsedTraining {
            document: t.input.clone(),
            questions: parse_plan_block(&t.target)?,
            summary: None,
        }),
        FormatVariant::PlanInputSg => {
            let at = t
                .input
                .rfind(PLAN_HEADER)
                .ok_or_else(|| Error::invalid(format!("record {}: input has no plan section", t.id)))?;
            Ok(ParsedTraining {
                document: t.input[..at].to_string(),
                questions: parse_plan_block(&t.input[at + PLAN_HEADER.len()..])?,
                summary: Some(t.target.clone()),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stripped {
    pub summary: String,
    /// False when a plan-output text had no separator line (whole text kept).
    pub separator_found: bool,
}

/// Drops the plan prefix from plan-output text: everything after the first
/// separator line. Other variants carry no plan and pass through.
pub fn strip_plan(generated: &str, variant: FormatVariant) -> Stripped {
    if variant != FormatVariant::PlanOutput {
        return Stripped { summary: generated.to_string(), separator_found: true };
    }
    let mut offset = 0;
    for line in generated.split_inclusive('\n') {
        let body = line.strip_suffix('\n').unwrap_or(line);
        if body.trim() == SUMMARY_SEPARATOR {
            return Stripped { summary: generated[offset + line.len()..].to_string(), separator_found: true };
        }
        offset += line.len();
    }
    tracing::warn!("plan separator missing; keeping the whole text");
    Stripped { summary: generated.to_string(), separator_found: false }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub avg_document_tokens: f64,
    pub avg_summary_tokens: f64,
    pub coverage: f64,
    pub density: f64,
    pub compression: f64,
}

pub const STATS_COLUMNS: [&str; 9] = [
    "Dataset",
    "#Training",
    "#Validation",
    "#Test",
    "Avg Doc Tokens",
    "Avg Summ Tokens",
    "Coverage",
    "Density",
    "Compression Ratio",
];

/// Order-independent mean: sorting first makes the float sum identical for
/// any permutation of the input.
fn stable_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn corpus_stats(records: impl IntoIterator<Item = Result<DatasetRecord>>) -> Result<CorpusStats> {
    let (mut train, mut validation, mut test) = (0, 0, 0);
    let (mut doc_tokens, mut summ_tokens) = (0u64, 0u64);
    let (mut cov, mut den, mut comp) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        let r = r?;
        match r.split {
            Split::Train => train += 1,
            Split::Validation => validation += 1,
            Split::Test => test += 1,
        }
        let d = stat_tokens(&r.document);
        let s = stat_tokens(&r.summary);
        let st = extractive_stats_tokens(&d, &s).map_err(|e| Error::InRecord { id: r.id.clone(), source: Box::new(e) })?;
        doc_tokens += d.len() as u64;
        summ_tokens += s.len() as u64;
        cov.push(st.coverage);
        den.push(st.density);
        comp.push(st.compression);
    }
    let n = train + validation + test;
    if n == 0 {
        return Err(Error::invalid("corpus has no records"));
    }
    Ok(CorpusStats {
        train,
        validation,
        test,
        avg_document_tokens: doc_tokens as f64 / n as f64,
        avg_summary_tokens: summ_tokens as f64 / n as f64,
        coverage: stable_mean(cov),
        density: stable_mean(den),
        compression: stable_mean(comp),
    })
}

pub fn write_stats_table(out: &mut impl Write, rows: &[(&str, &CorpusStats)]) -> Result<()> {
    writeln!(out, "{}", STATS_COLUMNS.join("\t"))?;
    for (name, s) in rows {
        writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            s.train, s.validation, s.test, s.avg_document_tokens, s.avg_summary_tokens, s.coverage, s.density, s.compression
        )?;
    }
    Ok(())
}
