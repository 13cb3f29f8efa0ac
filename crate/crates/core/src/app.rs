//! Command-line entry point: crawl -> ingest -> index -> dataset -> query/chat -> serve.
//!
//! stdout carries data (corpus stats, retrieval results, answers, `--json`
//! outcomes); stderr carries progress and logs.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::corpus::{read_corpus, write_corpus, Document};
use crate::dataset::{build_pairs, compute_corpus_stats, export_jsonl, load_jsonl, write_review_csv, BuildOptions, TemplateSet};
use crate::generation::{GenerationParams, LlmClient, PipelineError};
use crate::index::IndexSet;
use crate::ingest::{crawl, ingest_pages, read_raw_dir, today, write_raw_dir, CrawlError, FixtureTransport, HttpTransport, Transport};
use crate::retrieval::{RetrievalResult, Retriever};
use crate::service::{self, load_config, Config, ResolvedEndpoints, StartupError};

#[derive(Debug, Parser)]
#[command(name = "campus-rag", version, about = "Retrieval-augmented assistant over an institutional website")]
pub struct Cli {
    /// YAML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print a machine-readable outcome (or result) as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Overrides `index.seed`, the only source of randomness.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl the configured seeds and write an ingested corpus.
    Crawl(CrawlArgs),
    /// Turn a crawl output or fixture directory into a corpus.
    Ingest(IngestArgs),
    /// Index operations.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Instruction-pair dataset operations.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Retrieve contexts for one query.
    Query(QueryArgs),
    /// Interactive question answering; type `exit` to leave.
    Chat(ChatArgs),
    /// Run the HTTP service.
    Serve,
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also keep the fetched pages in a fixture-format directory.
    #[arg(long)]
    pub raw_dir: Option<PathBuf>,
    /// Serve fetches from a fixture directory instead of the network.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Collection date for entries without one (default: today).
    #[arg(long)]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build(IndexBuildArgs),
}

#[derive(Debug, Args)]
pub struct IndexBuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Config-format YAML whose chunk, index, bm25 and embedding sections are used.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    Build(DatasetBuildArgs),
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct DatasetBuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub augment: bool,
    #[arg(long)]
    pub review: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub q: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// Print per-stage scores as JSON.
    #[arg(long)]
    pub explain: bool,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommandOutcome {
    pub command: String,
    pub exit_code: i32,
    pub duration_ms: f64,
    pub artifacts: Vec<PathBuf>,
    pub counts: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
enum Failure {
    /// Bad configuration or arguments: exit 2.
    Config(String),
    /// Required resources missing or unusable: exit 3.
    Startup(String),
    /// The command ran and failed: exit 1.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Startup(_) => 3,
            Failure::Runtime(_) => 1,
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Startup(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<StartupError> for Failure {
    fn from(e: StartupError) -> Self {
        match e.exit_code() {
            2 => Failure::Config(e.to_string()),
            _ => Failure::Startup(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

pub type EnvLookup = Box<dyn Fn(&str) -> Option<String>>;

/// Injected dependencies, replaced in tests.
pub struct Deps {
    pub llm: Option<Arc<dyn LlmClient>>,
    pub env: EnvLookup,
}

impl Default for Deps {
    fn default() -> Self {
        Deps { llm: None, env: Box::new(service::process_env) }
    }
}

pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

#[derive(Default)]
struct Outputs {
    artifacts: Vec<PathBuf>,
    counts: BTreeMap<String, usize>,
}

impl Outputs {
    fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n);
    }
}

struct Ctx<'a, 'b> {
    config: Config,
    json: bool,
    deps: &'a Deps,
    io: &'a mut Io<'b>,
    out: Outputs,
}

impl Ctx<'_, '_> {
    fn endpoints(&self) -> ResolvedEndpoints {
        self.config.resolve_endpoints(&*self.deps.env)
    }

    fn data(&mut self, v: &impl Serialize) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(v).expect("output serializes");
        writeln!(self.io.stdout, "{text}").map_err(runtime)
    }

    fn note(&mut self, msg: impl std::fmt::Display) {
        let _ = writeln!(self.io.stderr, "{msg}");
    }
}

/// Parses `argv` (program name first) and runs the command. Returns the exit code.
pub fn run_with(argv: &[String], io: &mut Io<'_>, deps: &Deps) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(io.stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(io.stderr, "{text}");
                    2
                }
            };
        }
    };
    run_cli(cli, io, deps)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Crawl(_) => "crawl",
        Command::Ingest(_) => "ingest",
        Command::Index(_) => "index build",
        Command::Dataset(DatasetCommand::Build(_)) => "dataset build",
        Command::Dataset(DatasetCommand::Stats(_)) => "dataset stats",
        Command::Query(_) => "query",
        Command::Chat(_) => "chat",
        Command::Serve => "serve",
        Command::Stats(_) => "stats",
    }
}

fn load(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => load_config(p).map_err(|e| Failure::Config(e.to_string())),
        None => Ok(Config::default()),
    }
}

pub fn run_cli(cli: Cli, io: &mut Io<'_>, deps: &Deps) -> i32 {
    let started = Instant::now();
    let name = command_name(&cli.command);
    let json = cli.json;
    let config = load(cli.config.as_deref()).map(|mut c| {
        if let Some(seed) = cli.seed {
            c.index.seed = seed;
        }
        c
    });
    let mut ctx_out = Outputs::default();
    let result = match config {
        Err(e) => Err(e),
        Ok(config) => {
            let mut ctx = Ctx { config, json, deps, io, out: Outputs::default() };
            let r = dispatch(&cli.command, cli.seed, &mut ctx);
            ctx_out = ctx.out;
            r
        }
    };
    let (code, error) = match &result {
        Ok(()) => (0, None),
        Err(f) => {
            let _ = writeln!(io.stderr, "error: {}", f.message());
            (f.code(), Some(f.message().to_string()))
        }
    };
    // Commands whose --json output is their data print it themselves.
    let prints_own_json = matches!(cli.command, Command::Query(_) | Command::Chat(_) | Command::Stats(_))
        || matches!(cli.command, Command::Dataset(DatasetCommand::Stats(_)));
    if json && (!prints_own_json || code != 0) {
        let outcome = CommandOutcome {
            command: name.to_string(),
            exit_code: code,
            duration_ms: started.elapsed().as_secs_f64() * 1000.0,
            artifacts: ctx_out.artifacts,
            counts: ctx_out.counts,
            error,
        };
        let _ = writeln!(io.stdout, "{}", serde_json::to_string(&outcome).expect("outcome serializes"));
    }
    code
}

fn dispatch(command: &Command, seed: Option<u64>, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    match command {
        Command::Crawl(a) => cmd_crawl(a, ctx),
        Command::Ingest(a) => cmd_ingest(a, ctx),
        Command::Index(IndexCommand::Build(a)) => cmd_index_build(a, seed, ctx),
        Command::Dataset(DatasetCommand::Build(a)) => cmd_dataset_build(a, ctx),
        Command::Dataset(DatasetCommand::Stats(a)) | Command::Stats(a) => cmd_stats(a, ctx),
        Command::Query(a) => cmd_query(a, ctx),
        Command::Chat(a) => cmd_chat(a, ctx),
        Command::Serve => cmd_serve(ctx),
    }
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(runtime)
}

fn write_report(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| runtime(format!("writing {}: {e}", path.display())))
}

fn finish_corpus(
    ctx: &mut Ctx<'_, '_>,
    docs: &[Document],
    out: &Path,
) -> Result<(), Failure> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(runtime)?;
    }
    write_corpus(out, docs).map_err(runtime)?;
    ctx.out.artifacts.push(out.to_path_buf());
    ctx.out.count("documents", docs.len());
    Ok(())
}

fn cmd_crawl(a: &CrawlArgs, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let crawl_config = ctx.config.crawl.clone();
    let transport: Box<dyn Transport> = match &a.fixtures {
        Some(dir) => Box::new(
            FixtureTransport::open(dir).map_err(|e| Failure::Startup(format!("fixtures {}: {e}", dir.display())))?,
        ),
        None => Box::new(
            HttpTransport::new(Duration::from_secs_f64(crawl_config.request_timeout_secs)).map_err(runtime)?,
        ),
    };
    let rt = tokio_runtime()?;
    let output = rt.block_on(crawl(&crawl_config, transport.as_ref())).map_err(|e| match e {
        CrawlError::Config(_) | CrawlError::NoSeeds => Failure::Config(e.to_string()),
        CrawlError::SeedsUnreachable(_) => Failure::Runtime(e.to_string()),
    })?;
    if let Some(dir) = &a.raw_dir {
        write_raw_dir(dir, &output.pages).map_err(runtime)?;
        ctx.out.artifacts.push(dir.clone());
    }
    let (docs, ingest_report) = ingest_pages(&output.pages, &ctx.config.ingest).map_err(|e| Failure::Config(e.to_string()))?;
    finish_corpus(ctx, &docs, &a.out)?;
    let r = &output.report;
    ctx.out.count("pages_fetched", r.pages_fetched);
    ctx.out.count("pages_skipped_robots", r.pages_skipped_robots);
    ctx.out.count("pages_failed", r.pages_failed);
    if let Some(path) = &a.report {
        write_report(path, &json!({ "crawl": r, "ingest": ingest_report }))?;
        ctx.out.artifacts.push(path.clone());
    }
    ctx.note(format!(
        "crawled {} pages ({} skipped by robots.txt, {} failed); wrote {} documents to {}",
        r.pages_fetched,
        r.pages_skipped_robots,
        r.pages_failed,
        docs.len(),
        a.out.display()
    ));
    Ok(())
}

fn cmd_ingest(a: &IngestArgs, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let date = a.date.unwrap_or_else(today);
    let pages = read_raw_dir(&a.input, date).map_err(|e| Failure::Startup(format!("reading {}: {e}", a.input.display())))?;
    let (docs, report) = ingest_pages(&pages, &ctx.config.ingest).map_err(|e| Failure::Config(e.to_string()))?;
    finish_corpus(ctx, &docs, &a.out)?;
    ctx.out.count("pages_read", report.pages_read);
    ctx.out.count("extract_errors", report.extract_errors.len());
    ctx.out.count("quality_rejections", report.quality_rejections.len());
    ctx.out.count("pii_flagged", report.pii.len());
    ctx.out.count("duplicates_dropped", report.duplicates_dropped);
    if let Some(path) = &a.report {
        write_report(path, &serde_json::to_value(&report).expect("report serializes"))?;
        ctx.out.artifacts.push(path.clone());
    }
    ctx.note(format!("ingested {} of {} pages into {}", docs.len(), report.pages_read, a.out.display()));
    Ok(())
}

fn read_docs(path: &Path) -> Result<Vec<Document>, Failure> {
    read_corpus(path).map_err(|e| Failure::Startup(e.to_string()))
}

fn cmd_index_build(a: &IndexBuildArgs, seed: Option<u64>, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let mut params = match &a.params {
        Some(p) => load(Some(p))?,
        None => ctx.config.clone(),
    };
    if let Some(seed) = seed {
        params.index.seed = seed;
    }
    let docs = read_docs(&a.corpus)?;
    let endpoints = params.resolve_endpoints(&*ctx.deps.env);
    let provider = service::build_provider(&params, &endpoints)?;
    let set = IndexSet::build(&docs, &params.chunk, params.index, params.bm25, provider.as_ref(), service::embed_options(&params))
        .map_err(runtime)?;
    let paths = set.save(&a.out).map_err(runtime)?;
    ctx.out.artifacts.extend([paths.chunks, paths.dense, paths.sparse]);
    ctx.out.count("documents", docs.len());
    ctx.out.count("chunks", set.len());
    ctx.note(format!("indexed {} chunks from {} documents into {}", set.len(), docs.len(), a.out.display()));
    Ok(())
}

fn cmd_dataset_build(a: &DatasetBuildArgs, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let docs = read_docs(&a.corpus)?;
    let templates = match &a.templates {
        Some(p) => TemplateSet::load(p).map_err(|e| Failure::Config(e.to_string()))?,
        None => TemplateSet::default(),
    };
    let options = if a.augment { BuildOptions::augmented() } else { BuildOptions::default() };
    let pairs = build_pairs(&docs, &templates, &options);
    let report = export_jsonl(&pairs, &a.out).map_err(runtime)?;
    ctx.out.artifacts.push(report.path);
    ctx.out.count("pairs", report.count);
    if let Some(review) = &a.review {
        write_review_csv(&pairs, review).map_err(runtime)?;
        ctx.out.artifacts.push(review.clone());
    }
    ctx.note(format!("wrote {} pairs to {}", pairs.len(), a.out.display()));
    Ok(())
}

fn cmd_stats(a: &StatsArgs, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let docs = read_docs(&a.corpus)?;
    let pairs = match &a.pairs {
        Some(p) => load_jsonl(p).map_err(|e| Failure::Startup(e.to_string()))?,
        None => Vec::new(),
    };
    let stats = compute_corpus_stats(&docs, &pairs);
    ctx.data(&stats)
}

fn retriever_for(ctx: &Ctx<'_, '_>, index: Option<&Path>) -> Result<Retriever, Failure> {
    let name = index.map(Path::to_path_buf).unwrap_or_else(|| ctx.config.service.index.clone());
    Ok(service::build_retriever(&ctx.config, &ctx.endpoints(), &name)?)
}

fn with_k(retriever: &Retriever, k: Option<usize>) -> Result<crate::retrieval::RetrievalParams, Failure> {
    let mut p = retriever.params.clone();
    if let Some(k) = k {
        p.k_final = k;
        p.k_candidates = p.k_candidates.max(k);
    }
    p.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(p)
}

fn snippet(text: &str, n: usize) -> String {
    let mut s: String = text.chars().take(n).collect();
    if text.chars().count() > n {
        s.push_str("...");
    }
    s
}

fn explain(result: &RetrievalResult) -> Value {
    json!({
        "query": result.query,
        "expanded_terms": result.expanded_terms,
        "contexts": result.contexts.iter().map(|c| json!({
            "chunk_id": c.scores.chunk_id,
            "source_url": c.doc_ref.source_url,
            "dense_score": c.scores.dense_score,
            "sparse_score": c.scores.sparse_score,
            "fused_score": c.scores.fused_score,
            "rerank_score": c.scores.rerank_score,
            "final_rank": c.scores.final_rank,
            "snippet": snippet(&c.text, 160),
        })).collect::<Vec<_>>(),
        "candidates": result.candidates,
        "timings": result.timings,
    })
}

fn cmd_query(a: &QueryArgs, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let retriever = retriever_for(ctx, a.index.as_deref())?;
    let params = with_k(&retriever, a.k)?;
    let result = retriever.retrieve_with(&a.q, &params).map_err(|e| match e {
        crate::retrieval::RetrievalError::EmptyQuery | crate::retrieval::RetrievalError::Params(_) => {
            Failure::Config(e.to_string())
        }
        other => runtime(other),
    })?;
    ctx.out.count("contexts", result.contexts.len());
    if ctx.json {
        return ctx.data(&result);
    }
    if a.explain {
        return ctx.data(&explain(&result));
    }
    for c in &result.contexts {
        let line = format!(
            "{}. {} ({})\n   {}",
            c.scores.final_rank,
            c.doc_ref.title,
            c.doc_ref.source_url,
            snippet(&c.text, 200)
        );
        writeln!(ctx.io.stdout, "{line}").map_err(runtime)?;
    }
    Ok(())
}

fn cmd_chat(a: &ChatArgs, ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let retriever = retriever_for(ctx, a.index.as_deref())?;
    let params = with_k(&retriever, a.k)?;
    let client = match &ctx.deps.llm {
        Some(c) => c.clone(),
        None => service::build_llm(&ctx.config, &ctx.endpoints())?,
    };
    let generator = service::build_generator(&ctx.config, client);
    let gen_params: GenerationParams = ctx.config.generation.clone();
    let rt = tokio_runtime()?;
    let label = ctx.config.persona.user_label.clone();
    let mut answered = 0;
    loop {
        let _ = write!(ctx.io.stderr, "{label} ");
        let _ = ctx.io.stderr.flush();
        let mut line = String::new();
        if ctx.io.stdin.read_line(&mut line).map_err(runtime)? == 0 {
            break;
        }
        let query = line.trim();
        if query.eq_ignore_ascii_case("exit") {
            break;
        }
        if query.is_empty() {
            continue;
        }
        // Retrieval may use blocking HTTP clients, so it runs outside the runtime.
        let outcome = retriever
            .retrieve_with(query, &params)
            .map_err(PipelineError::from)
            .and_then(|r| rt.block_on(generator.answer_with(query, r, &gen_params, None)));
        match outcome {
            Ok(qa) => {
                answered += 1;
                if ctx.json {
                    let v = json!({
                        "query": query,
                        "answer": qa.answer.text,
                        "citations": qa.answer.citations,
                        "abstained": qa.answer.abstained,
                        "model": qa.answer.model_name,
                        "contexts": qa.retrieval.contexts,
                    });
                    writeln!(ctx.io.stdout, "{v}").map_err(runtime)?;
                } else {
                    writeln!(ctx.io.stdout, "{}\n", qa.answer.text).map_err(runtime)?;
                }
            }
            Err(e) => ctx.note(format!("error ({}): {e}", e.stage())),
        }
    }
    drop(rt);
    ctx.out.count("answered", answered);
    Ok(())
}

fn cmd_serve(ctx: &mut Ctx<'_, '_>) -> Result<(), Failure> {
    let endpoints = ctx.endpoints();
    let state = service::build_state(&ctx.config, &endpoints, ctx.deps.llm.clone())?;
    let bind = ctx.config.service.bind.clone();
    let port = ctx.config.service.port;
    let stderr = &mut ctx.io.stderr;
    service::serve(state, &bind, port, |addr| {
        let _ = writeln!(stderr, "listening on http://{addr}");
    })?;
    Ok(())
}

/// Installs the stderr log subscriber: JSON lines when `json`, text otherwise.
/// `RUST_LOG` sets the filter (default `info`).
pub fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    let _ = if json { builder.json().try_init() } else { builder.try_init() };
}

pub fn main_entry() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    init_logging(argv.iter().any(|a| a == "--json"));
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let mut io = Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr };
    run_with(&argv, &mut io, &Deps::default())
}
