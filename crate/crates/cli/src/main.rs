//! `expsum`: the explanation-planning pipeline as subcommands.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 gateway or
//! retrieval failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use expsum::llm::Profile;
use tracing_subscriber::EnvFilter;

/// Invalid combination of arguments, reported with exit status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser, Debug)]
#[command(name = "expsum", version, about = "Discourse-driven explanation planning for lay summaries")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "EXPSUM_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, env = "EXPSUM_SEED")]
    seed: Option<u64>,
    /// Dataset profile: generation cap and K.
    #[arg(long, global = true, env = "EXPSUM_PROFILE", value_parser = parse_profile)]
    profile: Option<Profile>,
    /// Parallel requests and per-record workers.
    #[arg(long, global = true, env = "EXPSUM_JOBS")]
    jobs: Option<usize>,
    /// Serve completions from canned files in this directory.
    #[arg(long, global = true, value_name = "DIR")]
    stub_gateway: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: expsum::Error| e.to_string())
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find explanatory pairs in reference summaries.
    Extract(ExtractArgs),
    /// Build question plans from extracted pairs.
    Plan(PlanArgs),
    /// Extract and plan in one pass.
    Augment(AugmentArgs),
    /// Inject noise into pairs or plans, or delete a category from plans.
    Perturb(PerturbArgs),
    /// Write training examples in one of the plan formats.
    Emit(EmitArgs),
    /// Generate summaries through the gateway.
    Summarize(SummarizeArgs),
    /// Score candidate summaries.
    Metrics(MetricsArgs),
    /// Entailment-based consistency, optionally with retrieval rescoring.
    Consistency(ConsistencyArgs),
    /// Corpus statistics table.
    Stats(StatsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rule,
    Rst,
    Llm,
}

#[derive(Args, Debug)]
pub struct CorpusIn {
    /// Corpus JSONL.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Only records of this split.
    #[arg(long)]
    pub split: Option<String>,
    /// Skip malformed records instead of stopping.
    #[arg(long)]
    pub skip_bad: bool,
}

#[derive(Args, Debug)]
pub struct ExtractorArgs {
    #[arg(long, value_enum, default_value = "rule")]
    pub method: Method,
    /// Parser output in the interchange format (for `--method rst`).
    #[arg(long, value_name = "FILE")]
    pub parses: Option<PathBuf>,
    /// Signal-pattern file replacing the built-in inventory.
    #[arg(long, value_name = "FILE")]
    pub patterns: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
    /// Output JSONL; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StrategyArgs {
    /// explanatory, lead-3, lead-k, tail-3, tail-k, random-3, random-k, all-edus, nonexp-edus
    #[arg(long, default_value = "explanatory")]
    pub strategy: String,
    /// Overrides the profile's K.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    /// Output of `extract`.
    #[arg(long, value_name = "FILE")]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub corpus: CorpusIn,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    /// Replace explanatory units in an `extract` output.
    Edu,
    /// Replace questions in an augmented corpus.
    Question,
}

#[derive(Args, Debug)]
pub struct PerturbArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "question")]
    pub level: Level,
    /// rr or frr.
    #[arg(long, conflicts_with = "delete")]
    pub mode: Option<String>,
    /// Items replaced per record under rr; capped at what each record has.
    #[arg(long)]
    pub count: Option<usize>,
    /// Remove every question of this category instead (background,
    /// elaboration, explanation, comparison).
    #[arg(long)]
    pub delete: Option<String>,
    /// Irrelevant questions, one per line; generated through the gateway
    /// when omitted.
    #[arg(long, value_name = "FILE")]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmitArgs {
    /// Augmented corpus JSONL.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// plan-output, plan-input-pg or plan-input-sg.
    #[arg(long)]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SummaryMode {
    ZeroShot,
    Icl,
    Plan,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Corpus, augmented corpus, or emitted training file.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "plan")]
    pub mode: SummaryMode,
    /// Record whose document and summary serve as the in-context example.
    #[arg(long)]
    pub example_id: Option<String>,
    /// Corpus holding the example record (defaults to `--in`).
    #[arg(long, value_name = "FILE")]
    pub example_corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// `{id, summary}` JSONL of generated summaries.
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    /// Corpus providing references and sources.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Per-summary reports (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregate table (TSV).
    #[arg(long, value_name = "FILE")]
    pub aggregate: Option<PathBuf>,
    /// Row label in the aggregate table.
    #[arg(long, default_value = "model")]
    pub label: String,
    /// Candidates are plan-output texts; drop the plan first.
    #[arg(long)]
    pub strip_plan: bool,
    /// Output of `consistency` to merge into the reports.
    #[arg(long, value_name = "FILE")]
    pub consistency: Option<PathBuf>,
    #[arg(long)]
    pub clamp_fre: bool,
    /// Count explained targets in ExpRatio as well.
    #[arg(long)]
    pub include_targets: bool,
    #[arg(long)]
    pub no_stem: bool,
}

#[derive(Args, Debug)]
pub struct ConsistencyArgs {
    #[arg(long, value_name = "FILE")]
    pub candidates: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Re-score low sentences against retrieved articles.
    #[arg(long)]
    pub star: bool,
    /// Recorded retrieval responses (overrides the configured source).
    #[arg(long, value_name = "DIR")]
    pub retrieval_dir: Option<PathBuf>,
    /// Articles per rescored sentence.
    #[arg(long)]
    pub articles: Option<usize>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Corpus JSONL files, one table row each.
    #[arg(long = "in", value_name = "FILE", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Row labels, in `--in` order (file stems by default).
    #[arg(long)]
    pub name: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<Usage>()) {
        return 1;
    }
    let remote = err
        .chain()
        .filter_map(|e| e.downcast_ref::<expsum::Error>())
        .any(expsum::Error::is_remote);
    if remote {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_target(false)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
