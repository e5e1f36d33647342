//! Command-line entry point. Every flag can also be set through a
//! `GROUNDCHAIN_*` environment variable; flags win.

pub mod records;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::composer::{
    build_corpus, instance_parse, BuildConfig, BuildReport, Composer, HttpGenerator, HttpParser,
    NestedInstance, ParseService,
};
use crate::decomposer::decompose;
use crate::evaluator::{
    corpus_stats, parse_threshold, render_table, score_grounding, score_multichoice, EvalRecord,
    TableReport,
};
use crate::http::RetryPolicy;
use crate::jsonl;
use crate::parse::ParseBundle;
use crate::progressive::{
    ground_batch, BatchSummary, ClueMode, DecodingParams, GroundConfig, GroundStatus,
    GroundingOutcome, HttpBackend, ModelBackend, ScriptedBackend,
};
use crate::protocol::{training_samples, GridSpec, MaskConfig, TrainingRecord};
use crate::scene_graph::{ingest_scene_graphs, load_region_descriptions, IngestFormat, SceneGraph};

use records::{DecomposedRecord, ParseRecord, QueryRecord};

#[derive(Debug, Parser)]
#[command(
    name = "groundchain",
    version,
    about = "Nested grounding data generation, progressive grounding and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build nested instances from scene graphs.
    Generate(GenerateArgs),
    /// Emit one query per target expression of a corpus.
    Queries(QueriesArgs),
    /// Split expressions into leveled sub-expressions.
    Decompose(DecomposeArgs),
    /// Ground decomposed expressions level by level.
    Ground(GroundArgs),
    /// Score predictions against gold boxes.
    Eval(EvalArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Training sequences with loss-mask spans.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum GroupBy {
    #[default]
    Level,
    None,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum EvalProtocol {
    #[default]
    Grounding,
    Multichoice,
}

#[derive(Debug, Clone, Args)]
pub struct NetArgs {
    /// Per-request timeout in seconds.
    #[arg(long, env = "GROUNDCHAIN_TIMEOUT", default_value_t = 30.0)]
    pub timeout: f64,
    /// Retries after a timeout or unavailable service.
    #[arg(long, env = "GROUNDCHAIN_RETRIES", default_value_t = 2)]
    pub retries: u32,
    /// Backoff before the first retry, doubled each time.
    #[arg(long, env = "GROUNDCHAIN_RETRY_DELAY_MS", default_value_t = 200)]
    pub retry_delay_ms: u64,
}

impl NetArgs {
    fn timeout(&self) -> Result<Duration, String> {
        Duration::try_from_secs_f64(self.timeout)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| format!("--timeout must be positive, got {}", self.timeout))
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            base_delay: Duration::from_millis(self.retry_delay_ms),
        }
    }
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let n: u32 = s.parse().map_err(|e| format!("{e}"))?;
    GridSpec::new(n).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    /// Scene graphs.
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "GROUNDCHAIN_INPUT_FORMAT", default_value = "triple_jsonl")]
    pub input_format: IngestFormat,
    /// Instance JSONL (`-` for stdout).
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: PathBuf,
    /// Longest predicate chain.
    #[arg(long, env = "GROUNDCHAIN_MAX_DEPTH", default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..=8))]
    pub max_depth: u32,
    /// Keep at most this many instances per image.
    #[arg(long, env = "GROUNDCHAIN_PER_IMAGE_CAP", value_parser = clap::value_parser!(u64).range(1..))]
    pub per_image_cap: Option<u64>,
    #[arg(long, env = "GROUNDCHAIN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "GROUNDCHAIN_CONCURRENCY", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=256))]
    pub concurrency: u32,
    /// Region descriptions JSON, for two-level instances.
    #[arg(long, env = "GROUNDCHAIN_REGION_DESCRIPTIONS")]
    pub region_descriptions: Option<PathBuf>,
    /// Text-generation service for levels three and up.
    #[arg(long, env = "GROUNDCHAIN_GENERATOR_URL")]
    pub generator_url: Option<String>,
    /// Parsing service for generated text.
    #[arg(long, env = "GROUNDCHAIN_PARSER_URL")]
    pub parser_url: Option<String>,
    /// File holding the generator system prompt.
    #[arg(long, env = "GROUNDCHAIN_SYSTEM_PROMPT_FILE")]
    pub system_prompt_file: Option<PathBuf>,
    /// Also write golden parses of template targets here.
    #[arg(long, env = "GROUNDCHAIN_PARSES_OUT")]
    pub parses: Option<PathBuf>,
    /// Generation report JSON.
    #[arg(long, env = "GROUNDCHAIN_REPORT")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct QueriesArgs {
    /// Instance JSONL.
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    /// Query JSONL.
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: PathBuf,
    /// Parse JSONL keyed by sentence text.
    #[arg(long, env = "GROUNDCHAIN_PARSES")]
    pub parses: Option<PathBuf>,
    /// Parsing service for sentences without a parse.
    #[arg(long, env = "GROUNDCHAIN_PARSER_URL")]
    pub parser_url: Option<String>,
    #[arg(long, env = "GROUNDCHAIN_CONCURRENCY", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=256))]
    pub concurrency: u32,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GroundArgs {
    /// Decomposition JSONL.
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    /// Outcome JSONL.
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: PathBuf,
    /// Per-level traces with timings.
    #[arg(long, env = "GROUNDCHAIN_TRACES")]
    pub traces: Option<PathBuf>,
    /// Model server base URL.
    #[arg(long, env = "GROUNDCHAIN_BACKEND_URL")]
    pub backend_url: Option<String>,
    /// Scripted backend instead of a server.
    #[arg(long, env = "GROUNDCHAIN_MOCK_SCRIPT", conflicts_with = "backend_url")]
    pub mock_script: Option<PathBuf>,
    #[arg(long, env = "GROUNDCHAIN_GRID_SIZE", default_value = "32", value_parser = parse_grid)]
    pub grid_size: GridSpec,
    /// Generated-token budget per call.
    #[arg(long, env = "GROUNDCHAIN_MAX_LENGTH", default_value_t = 64, value_parser = clap::value_parser!(u32).range(4..))]
    pub max_length: u32,
    #[arg(long, env = "GROUNDCHAIN_TEMPERATURE", default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, env = "GROUNDCHAIN_TOP_P", default_value_t = 1.0)]
    pub top_p: f64,
    #[arg(long, env = "GROUNDCHAIN_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "GROUNDCHAIN_CLUE_MODE", default_value = "previous-level")]
    pub clue_mode: ClueMode,
    #[arg(long, env = "GROUNDCHAIN_CONCURRENCY", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=256))]
    pub concurrency: u32,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Eval records (queries are accepted).
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    /// Grounding outcomes; their boxes become the predictions, joined by id.
    #[arg(long, env = "GROUNDCHAIN_OUTCOMES")]
    pub outcomes: Option<PathBuf>,
    #[arg(long, env = "GROUNDCHAIN_PROTOCOL", value_enum, default_value_t = EvalProtocol::Grounding)]
    pub protocol: EvalProtocol,
    /// Minimum IoU for a correct box, as a decimal or `p/q`.
    #[arg(long, env = "GROUNDCHAIN_IOU_THRESHOLD", default_value = "0.5")]
    pub iou_threshold: String,
    #[arg(long, env = "GROUNDCHAIN_GROUP_BY", value_enum, default_value_t = GroupBy::Level)]
    pub group_by: GroupBy,
    /// JSON report file.
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Standard-output rendering.
    #[arg(long, env = "GROUNDCHAIN_FORMAT", value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct StatsArgs {
    /// Instance JSONL.
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, env = "GROUNDCHAIN_FORMAT", value_enum, default_value_t = ReportFormat::Table)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Instance JSONL.
    #[arg(long, env = "GROUNDCHAIN_INPUT")]
    pub input: PathBuf,
    /// `{sequence, mask_spans}` JSONL.
    #[arg(long, env = "GROUNDCHAIN_OUTPUT")]
    pub output: PathBuf,
    #[arg(long, env = "GROUNDCHAIN_GRID_SIZE", default_value = "32", value_parser = parse_grid)]
    pub grid_size: GridSpec,
    /// Mask only the two location tokens, not `<b>`/`</b>`.
    #[arg(long, env = "GROUNDCHAIN_LOC_ONLY_MASK")]
    pub loc_only_mask: bool,
}

type CmdResult = Result<(), String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(err)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn print_report<T: Serialize + TableReport>(report: &T, format: ReportFormat) -> CmdResult {
    match format {
        ReportFormat::Table => print!("{}", render_table(report)),
        ReportFormat::Json => println!("{}", serde_json::to_string_pretty(report).map_err(err)?),
    }
    Ok(())
}

pub fn run_generate(a: &GenerateArgs) -> CmdResult {
    let ingested = ingest_scene_graphs(&a.input, a.input_format).map_err(err)?;
    let r = &ingested.report;
    log::info!(
        "read {} records: {} accepted, {} rejected, {} without predicates",
        r.records,
        r.accepted,
        r.rejected.len(),
        r.unusable
    );
    let regions = match &a.region_descriptions {
        Some(p) => load_region_descriptions(p).map_err(err)?,
        None => BTreeMap::new(),
    };
    let timeout = a.net.timeout()?;
    let generator = a
        .generator_url
        .as_deref()
        .map(|u| HttpGenerator::new(u, timeout, a.net.retry()))
        .transpose()
        .map_err(err)?;
    let parser = a
        .parser_url
        .as_deref()
        .map(|u| HttpParser::new(u, timeout, a.net.retry()))
        .transpose()
        .map_err(err)?;
    let system_prompt = a
        .system_prompt_file
        .as_deref()
        .map(fs::read_to_string)
        .transpose()
        .map_err(err)?;
    let composer = Composer {
        generator: generator.as_ref().map(|g| g as _),
        parser: parser.as_ref().map(|p| p as _),
        system_prompt: system_prompt.as_deref(),
    };
    let config = BuildConfig {
        max_depth: a.max_depth as usize,
        per_image_cap: a.per_image_cap.map(|c| c as usize),
        seed: a.seed,
    };
    let (instances, report) = build_corpus(
        &ingested.graphs,
        &composer,
        &config,
        &regions,
        a.concurrency as usize,
    );
    log_build(&report);
    if let Some(p) = &a.report {
        #[derive(Serialize)]
        struct Full<'a> {
            ingest: &'a crate::scene_graph::IngestReport,
            build: &'a BuildReport,
        }
        write_json(
            p,
            &Full {
                ingest: &ingested.report,
                build: &report,
            },
        )?;
    }
    if instances.is_empty() {
        return Err("no instances generated".into());
    }
    jsonl::write(&a.output, &instances).map_err(err)?;
    if let Some(p) = &a.parses {
        let by_image: HashMap<&str, &SceneGraph> = ingested
            .graphs
            .iter()
            .map(|g| (g.image_id.0.as_str(), g))
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        let parses: Vec<ParseRecord> = instances
            .iter()
            .filter_map(|i| instance_parse(by_image.get(i.image_id.0.as_str())?, i))
            .filter(|b| seen.insert(b.text.clone()))
            .map(|b| ParseRecord::from_bundle(&b))
            .collect();
        jsonl::write(p, &parses).map_err(err)?;
    }
    Ok(())
}

fn log_build(r: &BuildReport) {
    log::info!(
        "{} instances from {} graphs ({} chains, {} maximal); levels {:?}",
        r.instances,
        r.graphs,
        r.chains,
        r.maximal_chains,
        r.expressions_per_level
    );
    log::info!(
        "rejected: {} hallucinated, {} unresolvable head, {} generator errors; {} fallbacks, {} duplicates, {} capped",
        r.hallucination_rejected,
        r.unresolvable_head,
        r.generator_errors,
        r.generator_fallbacks,
        r.duplicate_texts,
        r.capped
    );
}

pub fn run_queries(a: &QueriesArgs) -> CmdResult {
    let corpus: Vec<NestedInstance> = jsonl::read(&a.input).map_err(err)?;
    let queries = QueryRecord::from_corpus(&corpus);
    if queries.is_empty() {
        return Err("corpus has no target expressions".into());
    }
    jsonl::write(&a.output, &queries).map_err(err)
}

fn same_words(a: &str, b: &str) -> bool {
    a.split_whitespace().eq(b.split_whitespace())
}

fn decompose_one(
    q: &QueryRecord,
    parses: &HashMap<String, ParseRecord>,
    service: Option<&dyn ParseService>,
) -> Result<ParseBundle, String> {
    let bundle = match (&q.bracketed, &q.conllu) {
        (Some(b), Some(c)) => ParseBundle::from_strings(b, c).map_err(err)?,
        _ => match parses.get(q.expression.trim()) {
            Some(p) => p.bundle().map_err(err)?,
            None => match service {
                Some(s) => s.parse(&q.expression).map_err(err)?,
                None => return Err("no parse available".into()),
            },
        },
    };
    if !same_words(&bundle.text, &q.expression) {
        return Err(format!("parse is of {:?}, not the expression", bundle.text));
    }
    Ok(bundle)
}

pub fn run_decompose(a: &DecomposeArgs) -> CmdResult {
    let lines = jsonl::read_lenient::<QueryRecord>(&a.input).map_err(err)?;
    let mut parses = HashMap::new();
    if let Some(p) = &a.parses {
        for (line, r) in jsonl::read_lenient::<ParseRecord>(p).map_err(err)? {
            match r {
                Ok(rec) => {
                    parses.insert(rec.text.trim().to_string(), rec);
                }
                Err(e) => log::warn!("{}:{line}: {e}", p.display()),
            }
        }
    }
    let service = a
        .parser_url
        .as_deref()
        .map(|u| HttpParser::new(u, a.net.timeout()?, a.net.retry()).map_err(err))
        .transpose()?;
    let service_ref: Option<&dyn ParseService> = service.as_ref().map(|s| s as _);
    let out: Vec<DecomposedRecord> =
        crate::pool::ordered_map(&lines, a.concurrency as usize, |_, (line, r)| match r {
            Err(e) => DecomposedRecord {
                id: format!("line:{line}"),
                image: String::new(),
                width: 0,
                height: 0,
                decomposition: None,
                error: Some(format!("malformed query: {e}")),
            },
            Ok(q) => {
                let (decomposition, error) = match decompose_one(q, &parses, service_ref) {
                    Ok(b) => (Some(decompose(&b, None)), None),
                    Err(e) => (None, Some(e)),
                };
                DecomposedRecord {
                    id: q.id.clone(),
                    image: q.image.clone(),
                    width: q.width,
                    height: q.height,
                    decomposition,
                    error,
                }
            }
        });
    let failed = out.iter().filter(|r| r.error.is_some()).count();
    for r in out.iter().filter(|r| r.error.is_some()) {
        log::warn!("{}: {}", r.id, r.error.as_deref().unwrap_or_default());
    }
    log::info!(
        "decomposed {} of {} expressions",
        out.len() - failed,
        out.len()
    );
    jsonl::write(&a.output, &out).map_err(err)
}

pub fn run_ground(a: &GroundArgs) -> CmdResult {
    let records: Vec<DecomposedRecord> = jsonl::read(&a.input).map_err(err)?;
    let backend: Box<dyn ModelBackend> = match (&a.mock_script, &a.backend_url) {
        (Some(script), _) => Box::new(ScriptedBackend::load(script)?),
        (None, Some(url)) => {
            let b = HttpBackend::new(url, a.net.timeout()?).map_err(err)?;
            let health = b
                .health()
                .map_err(|e| format!("model backend at {url} is unreachable: {e}"))?;
            log::info!(
                "backend {url}: status {}, model {:?}",
                health.status,
                health.model
            );
            Box::new(b)
        }
        (None, None) => return Err("no model backend: pass --backend-url or --mock-script".into()),
    };
    let config = GroundConfig {
        grid: a.grid_size,
        max_length: a.max_length,
        decoding: DecodingParams {
            temperature: a.temperature,
            top_p: a.top_p,
            seed: a.seed,
        },
        retry: a.net.retry(),
        clue_mode: a.clue_mode,
    };
    let mut items = Vec::new();
    let mut slots = Vec::new();
    for r in records {
        match r.into_item() {
            Ok(item) => {
                slots.push(None);
                items.push(item);
            }
            Err((id, image, error)) => slots.push(Some(GroundingOutcome {
                id,
                image,
                status: GroundStatus::Failed,
                bbox: None,
                loc: None,
                error: Some(error),
                traces: Vec::new(),
            })),
        }
    }
    let (grounded, mut summary) =
        ground_batch(&items, backend.as_ref(), &config, a.concurrency as usize);
    let mut grounded = grounded.into_iter();
    let outcomes: Vec<GroundingOutcome> = slots
        .into_iter()
        .map(|s| s.unwrap_or_else(|| grounded.next().expect("one outcome per item")))
        .collect();
    let skipped = outcomes.len() - summary.items;
    summary = BatchSummary {
        items: outcomes.len(),
        failed: summary.failed + skipped,
        ..summary
    };
    log::info!(
        "{} items: {} ok, {} degraded, {} failed, {} backend calls",
        summary.items,
        summary.ok,
        summary.degraded,
        summary.failed,
        summary.calls
    );
    jsonl::write(&a.output, &outcomes).map_err(err)?;
    if let Some(p) = &a.traces {
        let traces: Vec<_> = outcomes.iter().flat_map(|o| o.trace_records()).collect();
        jsonl::write(p, &traces).map_err(err)?;
    }
    Ok(())
}

pub fn run_eval(a: &EvalArgs) -> CmdResult {
    let threshold = parse_threshold(&a.iou_threshold).map_err(err)?;
    let mut records: Vec<EvalRecord> = jsonl::read(&a.input).map_err(err)?;
    if let Some(p) = &a.outcomes {
        let outcomes: Vec<GroundingOutcome> = jsonl::read(p).map_err(err)?;
        let by_id: HashMap<&str, &GroundingOutcome> =
            outcomes.iter().map(|o| (o.id.as_str(), o)).collect();
        for r in &mut records {
            r.predicted = by_id.get(r.id.as_str()).and_then(|o| o.bbox);
        }
    }
    let mut metrics = match a.protocol {
        EvalProtocol::Grounding => score_grounding(&records, threshold),
        EvalProtocol::Multichoice => score_multichoice(&records).map_err(err)?,
    };
    if !metrics.missing_prediction.is_empty() {
        log::warn!(
            "{} records lack a prediction",
            metrics.missing_prediction.len()
        );
    }
    if a.group_by == GroupBy::None {
        metrics.per_level.clear();
    }
    if let Some(p) = &a.output {
        write_json(p, &metrics)?;
    }
    print_report(&metrics, a.format)
}

pub fn run_stats(a: &StatsArgs) -> CmdResult {
    let corpus: Vec<NestedInstance> = jsonl::read(&a.input).map_err(err)?;
    let stats = corpus_stats(&corpus).map_err(err)?;
    if let Some(p) = &a.output {
        write_json(p, &stats)?;
    }
    print_report(&stats, a.format)
}

pub fn run_render(a: &RenderArgs) -> CmdResult {
    let corpus: Vec<NestedInstance> = jsonl::read(&a.input).map_err(err)?;
    let mask = MaskConfig {
        include_delimiters: !a.loc_only_mask,
    };
    let mut out = Vec::new();
    for (i, inst) in corpus.iter().enumerate() {
        match training_samples(inst, a.grid_size, mask) {
            Ok(samples) => out.extend(samples.iter().map(TrainingRecord::from)),
            Err(e) => log::warn!("instance {i} ({}): {e}", inst.image_id),
        }
    }
    if out.is_empty() {
        return Err("no training samples rendered".into());
    }
    jsonl::write(&a.output, &out).map_err(err)
}

pub fn dispatch(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Queries(a) => run_queries(a),
        Command::Decompose(a) => run_decompose(a),
        Command::Ground(a) => run_ground(a),
        Command::Eval(a) => run_eval(a),
        Command::Stats(a) => run_stats(a),
        Command::Render(a) => run_render(a),
    }
}

/// Parses arguments, logs to stderr and maps failures to exit code 1.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("GROUNDCHAIN_LOG", "info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
