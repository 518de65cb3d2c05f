//! Command-line entry points: `ingest`, `score`, `analyze`, `train`, `serve`.
//!
//! Every flag also reads an environment variable (`RECIPESIM_*`). `score`
//! additionally accepts a TOML run file; flags override its values.
//!
//! Exit codes: 0 success, 1 input error, 2 internal error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::analysis::{self, default_rules, parse_rules, render_report, FailureRule, ReportKind};
use crate::annotation::{create_task_set, AnnotationService, JudgmentStore, ServiceOptions, TaskSet};
use crate::corpus::{parse_corpus, Corpus};
use crate::eval_ml::{self, attach_features, evaluate, ForestConfig, LogisticConfig, ModelKind, ModelReport};
use crate::fusion::{score_all, EmbeddingSlots, FusionWeights, MissingPolicy, PairConvention, ScoreOptions, ScoreRun, ScoreTable, Selection};
use crate::semantic::{load_embeddings, EmbeddingProvider, FallbackEmbedder, HttpEmbeddingConfig, HttpEmbeddingProvider};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing input; exit code 1.
    #[error("{0}")]
    Input(String),
    /// Anything else; exit code 2.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "recipesim", version, about = "Multi-view recipe similarity engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus file and report rejected lines.
    Ingest(IngestArgs),
    /// Score every recipe pair and write a score table.
    Score(ScoreArgs),
    /// Write statistics, correlation, failure-case, lexical-bin and model-comparison reports.
    Analyze(AnalyzeArgs),
    /// Cross-validate a classifier on expert ground truth.
    Train(TrainArgs),
    /// Run the expert annotation HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus file (JSON lines with a nutrient-schema header).
    #[arg(env = "RECIPESIM_CORPUS")]
    pub corpus: PathBuf,
    /// Exit with code 1 if any line was rejected.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args, Default)]
pub struct ScoreArgs {
    /// TOML run file; flags given on the command line take precedence.
    #[arg(long, env = "RECIPESIM_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "RECIPESIM_CORPUS")]
    pub corpus: Option<PathBuf>,
    /// Embedding file for the first semantic model.
    #[arg(long, env = "RECIPESIM_EMBEDDINGS_A")]
    pub embeddings_a: Option<PathBuf>,
    /// Embedding file for the second semantic model.
    #[arg(long, env = "RECIPESIM_EMBEDDINGS_B")]
    pub embeddings_b: Option<PathBuf>,
    /// Fusion weights as `semantic,lexical,nutritional`.
    #[arg(long, env = "RECIPESIM_WEIGHTS")]
    pub weights: Option<WeightsArg>,
    #[arg(long, value_enum, env = "RECIPESIM_CONVENTION")]
    pub convention: Option<ConventionArg>,
    #[arg(long, env = "RECIPESIM_WORKERS")]
    pub workers: Option<usize>,
    /// What to do when a recipe has no embedding.
    #[arg(long, value_enum, env = "RECIPESIM_MISSING")]
    pub missing: Option<MissingArg>,
    /// Output table; stdout when omitted.
    #[arg(long, short, env = "RECIPESIM_OUT")]
    pub out: Option<PathBuf>,
    /// Write skipped pairs here as CSV.
    #[arg(long)]
    pub skipped_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConventionArg {
    Unordered,
    Ordered,
}

impl From<ConventionArg> for PairConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Unordered => PairConvention::Unordered,
            ConventionArg::Ordered => PairConvention::Ordered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingArg {
    Skip,
    Abort,
}

impl From<MissingArg> for MissingPolicy {
    fn from(m: MissingArg) -> Self {
        match m {
            MissingArg::Skip => MissingPolicy::Skip,
            MissingArg::Abort => MissingPolicy::Abort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightsArg(pub FusionWeights);

impl FromStr for WeightsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad weight {p:?}")))
            .collect::<Result<_, _>>()?;
        let [sem, lex, nutr] = parts[..] else {
            return Err(format!("expected 3 comma-separated weights, got {}", parts.len()));
        };
        FusionWeights::new(sem, lex, nutr).map(WeightsArg).map_err(|e| e.to_string())
    }
}

/// Where a semantic slot gets its vectors.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderSpec {
    File { path: PathBuf },
    Http(HttpEmbeddingConfig),
    Fallback { dimension: usize, #[serde(default)] salt: u64 },
}

impl ProviderSpec {
    fn build(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        Ok(match self {
            ProviderSpec::File { path } => {
                Box::new(load_embeddings(path).map_err(|e| input(format!("{}: {e}", path.display())))?)
            }
            ProviderSpec::Http(cfg) => Box::new(HttpEmbeddingProvider::new(cfg.clone()).map_err(internal)?),
            ProviderSpec::Fallback { dimension, salt } => Box::new(FallbackEmbedder::new(*dimension).with_salt(*salt)),
        })
    }
}

/// Contents of a `score` run file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model_a: Option<ProviderSpec>,
    pub model_b: Option<ProviderSpec>,
    pub weights: Option<FusionWeights>,
    pub convention: Option<ConventionArg>,
    pub workers: Option<usize>,
    pub missing: Option<MissingArg>,
}

pub const FALLBACK_A: ProviderSpec = ProviderSpec::Fallback { dimension: 384, salt: 1 };
pub const FALLBACK_B: ProviderSpec = ProviderSpec::Fallback { dimension: 256, salt: 2 };

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Score table written by `score`.
    #[arg(env = "RECIPESIM_TABLE")]
    pub table: PathBuf,
    /// Failure rules, one per line: `name: metric > 0.95, metric < 0.6`.
    #[arg(long, env = "RECIPESIM_RULES")]
    pub rules: Option<PathBuf>,
    /// Pair convention used when counting failure cases.
    #[arg(long, value_enum, default_value = "ordered")]
    pub convention: ConventionArg,
    #[arg(long, short, env = "RECIPESIM_OUT_DIR", default_value = "reports")]
    pub out_dir: PathBuf,
    /// Reports to write; all when omitted.
    #[arg(long = "report", value_enum)]
    pub reports: Vec<ReportKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Logistic,
    Forest,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Ground-truth CSV (`main_id,secondary_id,label`).
    #[arg(long, env = "RECIPESIM_GROUND_TRUTH")]
    pub ground_truth: PathBuf,
    /// Score table supplying the features.
    #[arg(long, env = "RECIPESIM_TABLE")]
    pub table: PathBuf,
    #[arg(long, value_enum, default_value = "logistic")]
    pub model: ModelArg,
    #[arg(long, env = "RECIPESIM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// L2 penalty for logistic regression.
    #[arg(long, default_value_t = 1.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Features tried per split in forest trees.
    #[arg(long, default_value_t = 1)]
    pub max_features: usize,
    /// Drop ground-truth pairs without scores instead of failing.
    #[arg(long)]
    pub allow_missing: bool,
    /// Report file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "RECIPESIM_CORPUS")]
    pub corpus: PathBuf,
    /// Task-set JSON. Created from `--table` when it does not exist.
    #[arg(long, env = "RECIPESIM_TASKS")]
    pub tasks: PathBuf,
    /// Judgment log (JSON lines, appended).
    #[arg(long, env = "RECIPESIM_STORE")]
    pub store: PathBuf,
    #[arg(long, env = "RECIPESIM_TABLE")]
    pub table: Option<PathBuf>,
    /// Main recipes sampled for a new task set.
    #[arg(long, default_value_t = 100)]
    pub mains: usize,
    /// Fraction of candidates kept per main recipe.
    #[arg(long, default_value_t = 0.2, conflicts_with = "top_k")]
    pub fraction: f64,
    /// Keep this many candidates per main recipe instead of a fraction.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, env = "RECIPESIM_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "RECIPESIM_BIND", default_value = "127.0.0.1")]
    pub bind: String,
    #[arg(long, env = "RECIPESIM_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Show fused scores to experts.
    #[arg(long)]
    pub reveal_scores: bool,
    /// Comma-separated expert ids; others are refused.
    #[arg(long, value_delimiter = ',')]
    pub roster: Vec<String>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Score(a) => cmd_score(&a).map(|_| ()),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Train(a) => cmd_train(&a).map(|_| ()),
        Command::Serve(a) => cmd_serve(&a),
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    let file = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    parse_corpus(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", path.display())))
}

pub fn load_table(path: &Path) -> Result<ScoreTable, CliError> {
    let file = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    ScoreTable::read_csv(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| internal(format!("{}: {e}", path.display())))
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    println!("schema: {}", corpus.nutrient_schema().join(","));
    println!("accepted: {}", corpus.len());
    println!("rejected: {}", corpus.rejected().len());
    for r in corpus.rejected() {
        println!("  line {}: {}", r.line, r.reason);
    }
    if args.strict && !corpus.rejected().is_empty() {
        return Err(input(format!("{} line(s) rejected", corpus.rejected().len())));
    }
    Ok(())
}

/// Resolved settings for one `score` run.
pub struct ScoreSettings {
    pub corpus: PathBuf,
    pub out: Option<PathBuf>,
    pub model_a: ProviderSpec,
    pub model_b: ProviderSpec,
    pub weights: FusionWeights,
    pub options: ScoreOptions,
}

pub fn resolve_score_settings(args: &ScoreArgs) -> Result<ScoreSettings, CliError> {
    let file = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            toml::from_str::<RunConfig>(&text).map_err(|e| input(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let corpus = args.corpus.clone().or(file.corpus).ok_or_else(|| input("no corpus given (--corpus or config)"))?;
    let slot = |flag: &Option<PathBuf>, cfg: Option<ProviderSpec>, default: ProviderSpec| match flag {
        Some(path) => ProviderSpec::File { path: path.clone() },
        None => cfg.unwrap_or(default),
    };
    let workers = args.workers.or(file.workers).unwrap_or(1);
    if workers == 0 {
        return Err(input("workers must be at least 1"));
    }
    Ok(ScoreSettings {
        corpus,
        out: args.out.clone().or(file.out),
        model_a: slot(&args.embeddings_a, file.model_a, FALLBACK_A),
        model_b: slot(&args.embeddings_b, file.model_b, FALLBACK_B),
        weights: args.weights.map(|w| w.0).or(file.weights).unwrap_or_default(),
        options: ScoreOptions {
            convention: args.convention.or(file.convention).map_or(PairConvention::Unordered, Into::into),
            workers,
            missing: args.missing.or(file.missing).map_or(MissingPolicy::Skip, Into::into),
        },
    })
}

pub fn cmd_score(args: &ScoreArgs) -> Result<ScoreRun, CliError> {
    let s = resolve_score_settings(args)?;
    let corpus = load_corpus(&s.corpus)?;
    if !corpus.rejected().is_empty() {
        log::warn!("{} corpus line(s) rejected", corpus.rejected().len());
    }
    let providers = EmbeddingSlots { model_a: s.model_a.build()?, model_b: s.model_b.build()? };
    let run = score_all(&corpus, &providers, &s.weights, &s.options).map_err(|e| match e {
        crate::fusion::FusionError::Pair { .. } | crate::fusion::FusionError::TooFewRecipes(_) => input(e),
        other => internal(other),
    })?;
    match &s.out {
        Some(path) => {
            let mut w = create(path)?;
            run.table.write_csv(&mut w).map_err(internal)?;
            w.flush().map_err(internal)?;
            eprintln!("wrote {} rows to {}", run.table.len(), path.display());
        }
        None => run.table.write_csv(std::io::stdout().lock()).map_err(internal)?,
    }
    if !run.skipped.is_empty() {
        eprintln!("skipped {} pair(s) with missing embeddings", run.skipped.len());
    }
    if let Some(path) = &args.skipped_report {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["main_id", "secondary_id", "reason"]).map_err(internal)?;
        for p in &run.skipped {
            w.write_record([&p.main_id, &p.secondary_id, &p.reason]).map_err(internal)?;
        }
        w.flush().map_err(internal)?;
    }
    Ok(run)
}

pub fn load_rules(path: Option<&Path>) -> Result<Vec<FailureRule>, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            parse_rules(&text).map_err(|e| input(format!("{}: {e}", p.display())))
        }
        None => Ok(default_rules()),
    }
}

/// Renders the requested reports without touching the filesystem.
pub fn analyze_table(
    table: &ScoreTable,
    rules: &[FailureRule],
    convention: PairConvention,
    kinds: &[ReportKind],
) -> Result<Vec<(ReportKind, String)>, analysis::AnalysisError> {
    kinds.iter().map(|&k| render_report(k, table, rules, convention).map(|text| (k, text))).collect()
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let table = load_table(&args.table)?;
    if table.is_empty() {
        return Err(input(format!("{}: score table is empty", args.table.display())));
    }
    let rules = load_rules(args.rules.as_deref())?;
    let kinds = if args.reports.is_empty() { ReportKind::ALL.to_vec() } else { args.reports.clone() };
    let reports = analyze_table(&table, &rules, args.convention.into(), &kinds).map_err(input)?;
    for (kind, text) in reports {
        let path = args.out_dir.join(kind.file_name());
        let mut w = create(&path)?;
        w.write_all(text.as_bytes()).map_err(internal)?;
        w.flush().map_err(internal)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<ModelReport, CliError> {
    let file = File::open(&args.ground_truth).map_err(|e| input(format!("{}: {e}", args.ground_truth.display())))?;
    let rows = eval_ml::read_ground_truth(BufReader::new(file)).map_err(|e| input(format!("{}: {e}", args.ground_truth.display())))?;
    let table = load_table(&args.table)?;
    let (pairs, excluded) = attach_features(&rows, &table);
    for x in &excluded {
        eprintln!("excluded ({}, {}): {}", x.main_id, x.secondary_id, x.reason);
    }
    if !excluded.is_empty() && !args.allow_missing {
        return Err(input(format!("{} ground-truth pair(s) lack features; pass --allow-missing to drop them", excluded.len())));
    }
    let kind = match args.model {
        ModelArg::Logistic => ModelKind::Logistic(LogisticConfig { l2_strength: args.l2, ..Default::default() }),
        ModelArg::Forest => ModelKind::Forest(ForestConfig {
            trees: args.trees,
            max_features: args.max_features,
            seed: args.seed,
            ..Default::default()
        }),
    };
    let report = evaluate(&kind, &pairs, args.folds, args.seed).map_err(input)?;
    let text = report.to_csv();
    match &args.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes()).map_err(internal)?;
            w.flush().map_err(internal)?;
        }
        None => print!("{text}"),
    }
    Ok(report)
}

/// Loads the task set, creating and saving it first when missing.
pub fn prepare_tasks(args: &ServeArgs) -> Result<TaskSet, CliError> {
    if args.tasks.exists() {
        return TaskSet::read(&args.tasks).map_err(|e| input(format!("{}: {e}", args.tasks.display())));
    }
    let table_path = args
        .table
        .as_ref()
        .ok_or_else(|| input(format!("{} does not exist and no --table was given to create it", args.tasks.display())))?;
    let table = load_table(table_path)?;
    let selection = match args.top_k {
        Some(k) => Selection::TopK(k),
        None => Selection::Fraction(args.fraction),
    };
    let tasks = create_task_set(&table, args.mains, selection, args.seed).map_err(input)?;
    tasks.write(&args.tasks).map_err(internal)?;
    eprintln!("created task set with {} pairs at {}", tasks.pairs.len(), args.tasks.display());
    Ok(tasks)
}

pub fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.corpus)?;
    let tasks = prepare_tasks(args)?;
    let store = JudgmentStore::open(&args.store).map_err(|e| input(format!("{}: {e}", args.store.display())))?;
    let options = ServiceOptions {
        reveal_scores: args.reveal_scores,
        roster: (!args.roster.is_empty()).then(|| args.roster.iter().cloned().collect::<BTreeSet<_>>()),
    };
    let service = Arc::new(AnnotationService::new(corpus, tasks, store, options).map_err(input)?);
    let addr: SocketAddr = format!("{}:{}", args.bind, args.port).parse().map_err(|e| input(format!("bind address: {e}")))?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(internal)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| input(format!("{addr}: {e}")))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(internal)?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            eprintln!("shutting down");
        };
        crate::server::serve(listener, service, shutdown).await.map_err(internal)
    })
}
