use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use expsum::consistency::{
    summac_conv, summac_star, BinnedAggregator, EntailmentBackend, LexicalOverlapBackend, RecordedRetriever,
    Retriever, SentenceVerdict,
};
use expsum::dataset::{
    build_plan, corpus_stats, emit_training, load_corpus, parse_training_record, strip_plan, write_jsonl,
    write_stats_table, AugmentedRecord, DatasetRecord, Extracted, FormatVariant, InterchangeExtractor,
    JsonlReader, LlmExtractor, OnError, PairExtractor, PlanSpec, Provenance, Split, TrainingRecord,
};
use expsum::llm::{CompletionBackend, Gateway, StubBackend};
use expsum::metrics::{evaluate, write_aggregate, MetricReport};
use expsum::par::map_ordered;
use expsum::plan::{delete_by_category, perturb_pairs, perturb_questions, Perturbation, Strategy};
use expsum::rst::{parse_interchange_line, ExplanatoryPair, RelationCategory};
use expsum::rules::{load_pattern_file, RuleExtractor};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::{debug, info, warn};

use crate::config::{EntailmentKind, Overrides, RetrievalKind, RunConfig};
use crate::{
    AugmentArgs, Cli, Command, ConsistencyArgs, CorpusIn, EmitArgs, ExtractArgs, ExtractorArgs, Level, Method,
    MetricsArgs, PerturbArgs, PlanArgs, StatsArgs, StrategyArgs, SummarizeArgs, SummaryMode, Usage,
};

struct Ctx {
    cfg: RunConfig,
    stub: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let flags = Overrides { profile: cli.profile, seed: cli.seed, jobs: cli.jobs };
    let cfg = RunConfig::load(cli.config.as_deref(), &flags)?;
    info!(fingerprint = %cfg.fingerprint(), "effective configuration");
    debug!(config = %serde_json::to_string(&cfg)?);
    let ctx = Ctx { cfg, stub: cli.stub_gateway };
    match cli.command {
        Command::Extract(a) => extract(&ctx, a),
        Command::Plan(a) => plan(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Perturb(a) => perturb(&ctx, a),
        Command::Emit(a) => emit(a),
        Command::Summarize(a) => summarize(&ctx, a),
        Command::Metrics(a) => metrics(&ctx, a),
        Command::Consistency(a) => consistency(&ctx, a),
        Command::Stats(a) => stats(a),
    }
}

impl Ctx {
    fn gateway(&self) -> Result<Gateway> {
        let backend: Arc<dyn CompletionBackend> = match &self.stub {
            Some(dir) => Arc::new(StubBackend::new(dir)?),
            None => Arc::new(expsum_http::ChatClient::from_config(&self.cfg.llm)?),
        };
        Ok(Gateway::new(self.cfg.llm.clone(), backend)?)
    }

    /// Per-record seed: stable for a given run seed and record id.
    fn record_seed(&self, salt: &str, id: &str) -> u64 {
        let h = expsum::fingerprint(&(self.cfg.seed, salt, id));
        u64::from_str_radix(&h[..16], 16).expect("hex digest")
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_all<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    JsonlReader::<_, T>::new(open(path)?, OnError::Fail)
        .map(|r| r.map(|(_, v)| v))
        .collect::<expsum::Result<_>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn write_out<T: Serialize>(path: Option<&Path>, items: &[T]) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            write_jsonl(&mut w, items)?;
            w.flush()?;
            info!(records = items.len(), out = %p.display(), "written");
        }
        None => {
            let mut w = io::stdout().lock();
            write_jsonl(&mut w, items)?;
        }
    }
    Ok(())
}

fn read_corpus(c: &CorpusIn) -> Result<Vec<DatasetRecord>> {
    let split = c.split.as_deref().map(str::parse::<Split>).transpose().map_err(|e| usage(e.to_string()))?;
    let policy = if c.skip_bad { OnError::Skip } else { OnError::Fail };
    let mut reader = load_corpus(&c.input, split, policy).with_context(|| format!("opening {}", c.input.display()))?;
    let records = reader
        .by_ref()
        .collect::<expsum::Result<Vec<_>>>()
        .with_context(|| format!("reading {}", c.input.display()))?;
    if reader.skipped() > 0 {
        warn!(skipped = reader.skipped(), "malformed records skipped");
    }
    info!(records = records.len(), input = %c.input.display(), "corpus loaded");
    Ok(records)
}

/// Runs `f` over records with the configured parallelism, stopping at the
/// first failure in record order.
fn par<T: Sync, R: Send>(ctx: &Ctx, items: &[T], f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    map_ordered(items, ctx.cfg.jobs, f).into_iter().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExtractionLine {
    id: String,
    provenance: Provenance,
    units: Vec<String>,
    pairs: Vec<ExplanatoryPair>,
}

fn rule_extractor(patterns: Option<&Path>) -> Result<RuleExtractor> {
    Ok(match patterns {
        Some(p) => RuleExtractor::new(&load_pattern_file(p)?)?,
        None => RuleExtractor::builtin(),
    })
}

fn make_extractor<'g>(a: &ExtractorArgs, gateway: Option<&'g Gateway>) -> Result<Box<dyn PairExtractor + 'g>> {
    Ok(match a.method {
        Method::Rule => Box::new(rule_extractor(a.patterns.as_deref())?),
        Method::Rst => {
            let path = a.parses.as_deref().ok_or_else(|| usage("--method rst needs --parses"))?;
            let mut parses = HashMap::new();
            for (i, line) in open(path)?.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc = parse_interchange_line(&line)
                    .with_context(|| format!("{} line {}", path.display(), i + 1))?;
                parses.insert(doc.doc_id.clone(), doc);
            }
            Box::new(InterchangeExtractor { parses })
        }
        Method::Llm => Box::new(LlmExtractor {
            gateway: gateway.expect("gateway built for llm extraction"),
            classifier: rule_extractor(a.patterns.as_deref())?,
        }),
    })
}

fn extract(ctx: &Ctx, a: ExtractArgs) -> Result<()> {
    let records = read_corpus(&a.corpus)?;
    let gateway = if a.extractor.method == Method::Llm { Some(ctx.gateway()?) } else { None };
    let extractor = make_extractor(&a.extractor, gateway.as_ref())?;
    let lines = par(ctx, &records, |r| {
        let e = extractor
            .extract(r)
            .map_err(|e| expsum::Error::InRecord { id: r.id.clone(), source: Box::new(e) })?;
        Ok(ExtractionLine { id: r.id.clone(), provenance: extractor.provenance(), units: e.units, pairs: e.pairs })
    })?;
    let total: usize = lines.iter().map(|l| l.pairs.len()).sum();
    info!(pairs = total, "extraction done");
    write_out(a.out.as_deref(), &lines)
}

fn plan_spec(ctx: &Ctx, s: &StrategyArgs) -> Result<PlanSpec> {
    let strategy: Strategy = s.strategy.parse().map_err(|e: expsum::Error| usage(e.to_string()))?;
    Ok(PlanSpec { strategy, k: s.k.unwrap_or_else(|| ctx.cfg.k()), seed: None })
}

fn plan_record(
    ctx: &Ctx,
    gw: &Gateway,
    spec: &PlanSpec,
    record: &DatasetRecord,
    line: &ExtractionLine,
) -> Result<AugmentedRecord> {
    let spec = PlanSpec { seed: Some(ctx.record_seed("plan", &record.id)), ..*spec };
    let extracted = Extracted { units: line.units.clone(), pairs: line.pairs.clone() };
    let plan = build_plan(&extracted, &spec, gw)
        .map_err(|e| expsum::Error::InRecord { id: record.id.clone(), source: Box::new(e) })?;
    Ok(AugmentedRecord {
        base: record.clone(),
        plan,
        pairs: line.pairs.clone(),
        extractor_provenance: line.provenance,
    })
}

fn plan(ctx: &Ctx, a: PlanArgs) -> Result<()> {
    let spec = plan_spec(ctx, &a.strategy)?;
    let records = read_corpus(&a.corpus)?;
    let lines: HashMap<String, ExtractionLine> =
        read_all::<ExtractionLine>(&a.pairs)?.into_iter().map(|l| (l.id.clone(), l)).collect();
    let gw = ctx.gateway()?;
    let out = par(ctx, &records, |r| {
        let line = lines.get(&r.id).ok_or_else(|| anyhow!("no extraction for record {}", r.id))?;
        plan_record(ctx, &gw, &spec, r, line)
    })?;
    write_out(Some(&a.out), &out)
}

fn augment(ctx: &Ctx, a: AugmentArgs) -> Result<()> {
    let spec = plan_spec(ctx, &a.strategy)?;
    let records = read_corpus(&a.corpus)?;
    let gw = ctx.gateway()?;
    let extractor = make_extractor(&a.extractor, Some(&gw))?;
    let out = par(ctx, &records, |r| {
        let e = extractor
            .extract(r)
            .map_err(|e| expsum::Error::InRecord { id: r.id.clone(), source: Box::new(e) })?;
        let line = ExtractionLine { id: r.id.clone(), provenance: extractor.provenance(), units: e.units, pairs: e.pairs };
        plan_record(ctx, &gw, &spec, r, &line)
    })?;
    write_out(Some(&a.out), &out)
}

fn reposition(pairs: &mut [ExplanatoryPair]) {
    pairs.sort_by_key(|p| (p.explanatory_edu, p.target_edu));
    for (i, p) in pairs.iter_mut().enumerate() {
        p.appearance_position = i;
    }
}

fn perturb(ctx: &Ctx, a: PerturbArgs) -> Result<()> {
    if let Some(cat) = &a.delete {
        let category: RelationCategory = cat.parse().map_err(|e: expsum::Error| usage(e.to_string()))?;
        let records: Vec<AugmentedRecord> = read_all(&a.input)?;
        let out = records
            .into_iter()
            .map(|mut r| {
                r.plan = delete_by_category(&r.plan, category)
                    .map_err(|e| expsum::Error::InRecord { id: r.base.id.clone(), source: Box::new(e) })?;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        return write_out(Some(&a.out), &out);
    }
    let mode: Perturbation = a
        .mode
        .as_deref()
        .ok_or_else(|| usage("perturb needs --mode or --delete"))?
        .parse()
        .map_err(|e: expsum::Error| usage(e.to_string()))?;
    if a.count == Some(0) {
        return Err(usage("--count must be at least 1"));
    }
    // Items replaced in one record: all (frr), the requested count capped at
    // what the record has, or a seeded draw from 1..=n.
    let count_for = |id: &str, available: usize| match (mode, a.count) {
        (Perturbation::FullRandomReplacement, _) => None,
        (Perturbation::RandomReplacement, Some(c)) => Some(c.min(available)),
        (Perturbation::RandomReplacement, None) => {
            Some(1 + (ctx.record_seed("count", id) % available as u64) as usize)
        }
    };

    match a.level {
        Level::Edu => {
            let lines: Vec<ExtractionLine> = read_all(&a.input)?;
            let mut skipped = 0;
            let out: Vec<ExtractionLine> = lines
                .into_iter()
                .map(|mut l| {
                    let distinct = l.pairs.iter().map(|p| p.explanatory_edu).collect::<std::collections::BTreeSet<_>>().len();
                    if distinct == 0 {
                        return l;
                    }
                    let seed = ctx.record_seed("perturb-edu", &l.id);
                    match perturb_pairs(&l.pairs, l.units.len(), mode, count_for(&l.id, distinct), seed) {
                        Ok(mut p) => {
                            reposition(&mut p);
                            l.pairs = p;
                        }
                        Err(e) => {
                            warn!(id = %l.id, "left unperturbed: {e}");
                            skipped += 1;
                        }
                    }
                    l
                })
                .collect();
            if skipped > 0 {
                warn!(skipped, "records without enough replacement units");
            }
            write_out(Some(&a.out), &out)
        }
        Level::Question => {
            let records: Vec<AugmentedRecord> = read_all(&a.input)?;
            let file_pool: Option<Vec<String>> = match &a.pool {
                Some(p) => Some(
                    std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(String::from)
                        .collect(),
                ),
                None => None,
            };
            let gw = if file_pool.is_none() { Some(ctx.gateway()?) } else { None };
            let out = par(ctx, &records, |r| {
                let n = r.plan.len();
                if n == 0 {
                    return Ok(r.clone());
                }
                let count = count_for(&r.base.id, n);
                let pool = match (&file_pool, &gw) {
                    (Some(p), _) => p.clone(),
                    (None, Some(gw)) => (0..count.unwrap_or(n))
                        .map(|_| gw.generate_irrelevant_question().map(|q| q.text))
                        .collect::<expsum::Result<Vec<_>>>()?,
                    (None, None) => unreachable!("gateway built when no pool file"),
                };
                let seed = ctx.record_seed("perturb-question", &r.base.id);
                let mut r = r.clone();
                r.plan = perturb_questions(&r.plan, &pool, mode, count, seed)
                    .map_err(|e| expsum::Error::InRecord { id: r.base.id.clone(), source: Box::new(e) })?;
                Ok(r)
            })?;
            write_out(Some(&a.out), &out)
        }
    }
}

fn emit(a: EmitArgs) -> Result<()> {
    let variant: FormatVariant = a.format.parse().map_err(|e: expsum::Error| usage(e.to_string()))?;
    let records: Vec<AugmentedRecord> = read_all(&a.input)?;
    let mut w = create(&a.out)?;
    let n = emit_training(&records, variant, &mut w)?;
    w.flush()?;
    info!(records = n, format = %variant, out = %a.out.display(), "training file written");
    Ok(())
}

/// A document to summarize and the plan questions that came with it.
struct SummaryInput {
    id: String,
    document: String,
    questions: Vec<String>,
}

fn summary_inputs(path: &Path) -> Result<Vec<SummaryInput>> {
    let values: Vec<serde_json::Value> = read_all(path)?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let ctx = || format!("{} record {}", path.display(), i + 1);
            if v.get("format").is_some() {
                let t: TrainingRecord = serde_json::from_value(v).with_context(ctx)?;
                let p = parse_training_record(&t).with_context(ctx)?;
                Ok(SummaryInput { id: t.id, document: p.document, questions: p.questions })
            } else if v.get("plan").is_some() {
                let r: AugmentedRecord = serde_json::from_value(v).with_context(ctx)?;
                let questions = r.plan.texts().map(String::from).collect();
                Ok(SummaryInput { id: r.base.id, document: r.base.document, questions })
            } else {
                let r: DatasetRecord = serde_json::from_value(v).with_context(ctx)?;
                Ok(SummaryInput { id: r.id, document: r.document, questions: Vec::new() })
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Candidate {
    id: String,
    summary: String,
}

fn summarize(ctx: &Ctx, a: SummarizeArgs) -> Result<()> {
    let inputs = summary_inputs(&a.input)?;
    let example = match a.mode {
        SummaryMode::Icl => {
            let id = a.example_id.as_deref().ok_or_else(|| usage("--mode icl needs --example-id"))?;
            let corpus: Vec<DatasetRecord> = read_all(a.example_corpus.as_deref().unwrap_or(&a.input))?;
            Some(corpus.into_iter().find(|r| r.id == id).ok_or_else(|| anyhow!("example record {id} not found"))?)
        }
        _ => None,
    };
    let gw = ctx.gateway()?;
    let out = par(ctx, &inputs, |s| {
        let text = match a.mode {
            SummaryMode::ZeroShot => gw.summarize_zero_shot(&s.document),
            SummaryMode::Icl => {
                let ex = example.as_ref().expect("example loaded");
                gw.summarize_icl(&ex.document, &ex.summary, &s.document)
            }
            SummaryMode::Plan if s.questions.is_empty() => {
                warn!(id = %s.id, "empty plan; summarizing without one");
                gw.summarize_zero_shot(&s.document)
            }
            SummaryMode::Plan => gw.summarize_with_questions(&s.document, s.questions.iter().map(String::as_str)),
        }
        .map_err(|e| expsum::Error::InRecord { id: s.id.clone(), source: Box::new(e) })?;
        Ok(Candidate { id: s.id.clone(), summary: text })
    })?;
    write_out(Some(&a.out), &out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConsistencyLine {
    id: String,
    summac: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summac_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sentence_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sentences: Vec<SentenceVerdict>,
}

fn corpus_map(path: &Path) -> Result<HashMap<String, DatasetRecord>> {
    let mut map = HashMap::new();
    for r in load_corpus(path, None, OnError::Fail).with_context(|| format!("opening {}", path.display()))? {
        let r = r.with_context(|| format!("reading {}", path.display()))?;
        // Ids are unique per split; references are looked up by id alone.
        if let Some(prev) = map.insert(r.id.clone(), r) {
            bail!("corpus {} has id {} in more than one split", path.display(), prev.id);
        }
    }
    Ok(map)
}

fn metrics(ctx: &Ctx, a: MetricsArgs) -> Result<()> {
    let mut mcfg = ctx.cfg.metrics.clone();
    mcfg.clamp_fre |= a.clamp_fre;
    mcfg.exp_ratio_include_targets |= a.include_targets;
    if a.no_stem {
        mcfg.rouge_stemming = false;
    }
    info!(fingerprint = %mcfg.fingerprint(), "metric settings");
    let candidates: Vec<Candidate> = read_all(&a.candidates)?;
    let corpus = corpus_map(&a.corpus)?;
    let cons: HashMap<String, ConsistencyLine> = match &a.consistency {
        Some(p) => read_all::<ConsistencyLine>(p)?.into_iter().map(|l| (l.id.clone(), l)).collect(),
        None => HashMap::new(),
    };
    let extractor = RuleExtractor::builtin();
    let reports: Vec<MetricReport> = par(ctx, &candidates, |c| {
        let base = corpus.get(&c.id).ok_or_else(|| anyhow!("candidate {} has no corpus record", c.id))?;
        let text = if a.strip_plan {
            let s = strip_plan(&c.summary, FormatVariant::PlanOutput);
            if !s.separator_found {
                warn!(id = %c.id, "no plan separator; scoring the whole text");
            }
            s.summary
        } else {
            c.summary.clone()
        };
        let mut r = evaluate(&c.id, &text, &base.summary, &base.document, &extractor, &mcfg)
            .map_err(|e| expsum::Error::InRecord { id: c.id.clone(), source: Box::new(e) })?;
        if let Some(l) = cons.get(&c.id) {
            r.summac = Some(l.summac);
            r.summac_star = l.summac_star;
        }
        Ok(r)
    })?;
    write_out(Some(&a.out), &reports)?;
    if let Some(p) = &a.aggregate {
        let mut w = create(p)?;
        write_aggregate(&mut w, &a.label, &reports)?;
        w.flush()?;
    }
    Ok(())
}

fn consistency(ctx: &Ctx, a: ConsistencyArgs) -> Result<()> {
    let c = &ctx.cfg.consistency;
    let timeout = Duration::from_secs_f64(c.request_timeout_secs);
    let backend: Box<dyn EntailmentBackend> = match c.backend {
        EntailmentKind::Lexical => Box::new(LexicalOverlapBackend),
        EntailmentKind::Http => {
            let url = c.nli_url.as_deref().ok_or_else(|| usage("consistency.backend = \"http\" needs nli_url"))?;
            Box::new(expsum_http::HttpEntailment::new(url, timeout)?)
        }
    };
    let retriever: Option<Box<dyn Retriever>> = if !a.star {
        None
    } else if let Some(dir) = a.retrieval_dir.as_ref().or(c.retrieval_dir.as_ref()).filter(|_| {
        a.retrieval_dir.is_some() || c.retrieval == RetrievalKind::Recorded
    }) {
        Some(Box::new(RecordedRetriever::new(dir)?))
    } else if c.retrieval == RetrievalKind::Wikipedia {
        Some(Box::new(expsum_http::WikipediaRetriever::new(&c.wikipedia_api, timeout)?))
    } else {
        return Err(usage("--star needs --retrieval-dir or consistency.retrieval = \"wikipedia\""));
    };
    let mut star = c.star.clone();
    star.jobs = 1;
    if let Some(n) = a.articles {
        star.articles_per_sentence = n;
    }
    let aggregator = BinnedAggregator::default();
    let candidates: Vec<Candidate> = read_all(&a.candidates)?;
    let corpus = corpus_map(&a.corpus)?;
    let lines = par(ctx, &candidates, |cand| {
        let base = corpus.get(&cand.id).ok_or_else(|| anyhow!("candidate {} has no corpus record", cand.id))?;
        let in_record = |e: expsum::Error| expsum::Error::InRecord { id: cand.id.clone(), source: Box::new(e) };
        Ok(match &retriever {
            Some(r) => {
                let res = summac_star(&base.document, &cand.summary, &*backend, &aggregator, &**r, &star)
                    .map_err(in_record)?;
                let source: Vec<f64> = res.verdicts.iter().map(|v| v.source_score).collect();
                ConsistencyLine {
                    id: cand.id.clone(),
                    summac: source.iter().sum::<f64>() / source.len() as f64,
                    summac_star: Some(res.aggregate),
                    sentence_scores: Vec::new(),
                    sentences: res.verdicts,
                }
            }
            None => {
                let res = summac_conv(&base.document, &cand.summary, &*backend, &aggregator, 1).map_err(in_record)?;
                ConsistencyLine {
                    id: cand.id.clone(),
                    summac: res.aggregate,
                    summac_star: None,
                    sentence_scores: res.sentence_scores,
                    sentences: Vec::new(),
                }
            }
        })
    })?;
    write_out(Some(&a.out), &lines)
}

fn stats(a: StatsArgs) -> Result<()> {
    if !a.name.is_empty() && a.name.len() != a.inputs.len() {
        return Err(usage("give one --name per --in"));
    }
    let mut rows = Vec::new();
    for (i, path) in a.inputs.iter().enumerate() {
        let name = a.name.get(i).cloned().unwrap_or_else(|| {
            path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
        });
        let reader = load_corpus(path, None, OnError::Fail).with_context(|| format!("opening {}", path.display()))?;
        let s = corpus_stats(reader).with_context(|| format!("statistics of {}", path.display()))?;
        rows.push((name, s));
    }
    let table: Vec<(&str, &_)> = rows.iter().map(|(n, s)| (n.as_str(), s)).collect();
    match &a.out {
        Some(p) => {
            let mut w = create(p)?;
            write_stats_table(&mut w, &table)?;
            w.flush()?;
        }
        None => write_stats_table(&mut io::stdout().lock(), &table)?,
    }
    Ok(())
}
