//! `taiscan`: ingest the regulation, build the vector index, pre-screen,
//! assess, evaluate scenarios and run the REST service.

mod error;
mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use taiscan_core::annindex::{self, AnnIndex, BuildParams};
use taiscan_core::backends::{
    read_vec_file, BackendMode, BackendSet, EmbeddingBackend, FixtureManifest, HashEmbedder, HttpBackend,
    RecordingEmbedder, RecordingGenerator, DEFAULT_HASH_DIMENSION,
};
use taiscan_core::corpus::{count_headings, parse_document, store_corpus, Corpus, CorpusMeta, UnitKind};
use taiscan_core::evalharness::{emit_report, load_scenarios, render_table, run_scenarios, EvalComponents};
use taiscan_core::prescreen::{evaluate, validate_answers, Catalog};
use taiscan_core::ragflow::{build_index, AssessmentInput, Pipeline, PromptTemplate, Role};
use taiscan_service::state::load_corpus_file;
use taiscan_service::ServiceConfig;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "taiscan", version, about = "AI Act compliance self-assessment tool")]
#[command(after_help = "Exit codes: 0 ok, 2 input error, 3 backend failure, 4 gated by pre-screening, 5 malformed model output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse regulation text into a `.units` corpus file.
    Ingest {
        source: PathBuf,
        out: PathBuf,
        /// Version label stored in the corpus metadata.
        #[arg(long, default_value = "source")]
        edition: String,
    },
    /// Embed corpus units and write the vector index.
    BuildIndex(BuildIndexArgs),
    /// Evaluate a pre-screening answer file (JSON); exits 4 when blocked.
    Prescreen {
        answers: PathBuf,
        /// Option catalog (TOML); the bundled one by default.
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run one assessment.
    Assess(AssessArgs),
    /// Run evaluation scenarios and write the report.
    Eval(EvalArgs),
    /// Run the REST service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(id = "embedder", required = true, multiple = false)]
struct EmbedderChoice {
    /// Seeded hash embedding (no model needed).
    #[arg(long, group = "embedder")]
    deterministic: bool,
    /// Recorded embeddings from a fixture directory.
    #[arg(long, group = "embedder", value_name = "DIR")]
    replay: Option<PathBuf>,
    /// Live embedding backend from a service config file.
    #[arg(long, group = "embedder", value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildIndexArgs {
    /// `.units` file or raw regulation text.
    units: PathBuf,
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    trees: u16,
    #[arg(long, default_value_t = 16)]
    leaf_size: u32,
    /// Forest seed; also the hash embedding seed with --deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "article")]
    kinds: Vec<UnitKind>,
    /// Hash embedding dimension with --deterministic.
    #[arg(long, default_value_t = DEFAULT_HASH_DIMENSION)]
    dimension: usize,
    #[command(flatten)]
    embedder: EmbedderChoice,
}

#[derive(Debug, Args)]
struct FieldFlags {
    #[arg(long)]
    role: Option<Role>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    system_type: Option<String>,
    #[arg(long)]
    input_data: Option<String>,
    #[arg(long)]
    intended_use: Option<String>,
}

#[derive(Debug, Args)]
struct AssessArgs {
    /// Input file (TOML or JSON) with the five fields, either at the top
    /// level or under `[input]` as in scenario files.
    #[arg(long, conflicts_with_all = ["role", "domain", "system_type", "input_data", "intended_use"])]
    input: Option<PathBuf>,
    #[command(flatten)]
    fields: FieldFlags,
    /// Replaces the composed query before rewriting.
    #[arg(long)]
    query: Option<String>,
    /// Replay embeddings and completions from a fixture directory.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["live", "deterministic"])]
    replay: Option<PathBuf>,
    /// Hash embeddings with completions from a fixture directory.
    #[arg(long, value_name = "DIR", conflicts_with = "live")]
    deterministic: Option<PathBuf>,
    /// Live backends from --config.
    #[arg(long, requires = "config")]
    live: bool,
    /// Service config file: corpus, index, retrieval and backend settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `.units` file or raw regulation text (overrides the config).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Saved index; built in memory when absent.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Units retrieved per assessment.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of scenario files (`*.toml`).
    scenarios: PathBuf,
    /// Report directory.
    out: PathBuf,
    /// `.units` file or raw regulation text.
    #[arg(long)]
    corpus: PathBuf,
    /// Run every scenario against the live backends of --config.
    #[arg(long, requires = "config")]
    live: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// With --live: record every response into this fixture directory.
    #[arg(long, value_name = "DIR", requires = "live")]
    record: Option<PathBuf>,
    /// Prompt template directory; bundled templates by default.
    #[arg(long)]
    templates: Option<PathBuf>,
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    load_corpus_file(path).map_err(CliError::input)
}

fn load_service_config(path: &Path) -> Result<ServiceConfig, CliError> {
    ServiceConfig::load(path).map_err(CliError::input)
}

fn ingest(source: &Path, out: &Path, edition: &str) -> Result<(), CliError> {
    let raw = read_file(source)?;
    let modified: DateTime<Utc> = std::fs::metadata(source)
        .and_then(|m| m.modified())
        .map_err(|e| CliError::Input(format!("{}: {e}", source.display())))?
        .into();
    let name = source.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let corpus = parse_document(&raw, CorpusMeta::new(name, edition, modified)).map_err(CliError::input)?;
    let oracle = count_headings(&raw);
    if corpus.counts() != oracle {
        return Err(CliError::Input(format!(
            "parsed counts ({}) disagree with heading counts ({oracle})",
            corpus.counts()
        )));
    }
    let n = store_corpus(&corpus, out).map_err(CliError::input)?;
    println!("wrote {n} units to {}", out.display());
    println!("{}", corpus.counts());
    Ok(())
}

async fn build_index_cmd(args: &BuildIndexArgs) -> Result<(), CliError> {
    let corpus = load_corpus(&args.units)?;
    let embedder: Arc<dyn EmbeddingBackend> = match (&args.embedder.replay, &args.embedder.config) {
        (Some(dir), _) => BackendSet::replay(dir)?.embedder,
        (_, Some(cfg)) => {
            let config = load_service_config(cfg)?;
            Arc::new(HttpBackend::new(config.backend.embedding)?)
        }
        _ => Arc::new(HashEmbedder::new(args.seed, args.dimension)),
    };
    let params = BuildParams::new(args.trees, args.leaf_size, args.seed);
    let index = build_index(&corpus, embedder.as_ref(), &args.kinds, params).await?;
    annindex::save(&index, &args.out).map_err(CliError::input)?;
    let kinds: Vec<&str> = args.kinds.iter().map(|k| k.as_str()).collect();
    println!(
        "items={} dimension={} trees={} leaf_size={} seed={} kinds={} embedding_model={}",
        index.len(),
        index.dimension(),
        args.trees,
        args.leaf_size,
        args.seed,
        kinds.join(","),
        embedder.model_id()
    );
    Ok(())
}

fn prescreen_cmd(answers: &Path, catalog: Option<&Path>, json: bool) -> Result<(), CliError> {
    let catalog = match catalog {
        Some(p) => Catalog::load(p).map_err(CliError::input)?,
        None => Catalog::bundled(),
    };
    let raw: serde_json::Value = serde_json::from_str(&read_file(answers)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", answers.display())))?;
    let answers = validate_answers(&catalog, &raw).map_err(CliError::input)?;
    let outcome = evaluate(&catalog, &answers);
    if json {
        println!("{}", serde_json::to_string_pretty(&outcome).expect("outcome serializes"));
    } else {
        print!("{}", outcome.explain());
    }
    if outcome.may_proceed {
        Ok(())
    } else {
        Err(CliError::Gated)
    }
}

fn read_input(args: &AssessArgs) -> Result<AssessmentInput, CliError> {
    if let Some(path) = &args.input {
        let text = read_file(path)?;
        let mut value: serde_json::Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        } else {
            let table: toml::Table = text.parse().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::to_value(table).expect("TOML converts to JSON")
        };
        if let Some(inner) = value.get_mut("input") {
            value = inner.take();
        }
        let input: AssessmentInput =
            serde_json::from_value(value).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        input.validate()?;
        return Ok(input);
    }
    let f = &args.fields;
    let missing: Vec<&str> = [
        ("--role", f.role.is_none()),
        ("--domain", f.domain.is_none()),
        ("--system-type", f.system_type.is_none()),
        ("--input-data", f.input_data.is_none()),
        ("--intended-use", f.intended_use.is_none()),
    ]
    .into_iter()
    .filter(|(_, m)| *m)
    .map(|(n, _)| n)
    .collect();
    if !missing.is_empty() {
        return Err(CliError::Input(format!(
            "give --input or all five fields; missing {}",
            missing.join(", ")
        )));
    }
    Ok(AssessmentInput::new(
        f.role.expect("checked"),
        f.domain.clone().expect("checked"),
        f.system_type.clone().expect("checked"),
        f.input_data.clone().expect("checked"),
        f.intended_use.clone().expect("checked"),
    )?)
}

async fn assess_cmd(args: &AssessArgs) -> Result<(), CliError> {
    let input = read_input(args)?;
    let config = args.config.as_deref().map(load_service_config).transpose()?;

    let backends = match (&args.replay, &args.deterministic, args.live, &config) {
        (Some(dir), _, _, _) => BackendSet::replay(dir)?,
        (_, Some(dir), _, _) => BackendSet::deterministic(dir, args.seed)?,
        (_, _, true, Some(c)) => BackendSet::live(&c.backend.embedding, &c.backend.generation)?,
        (_, _, false, Some(c)) => match (c.backend.mode, &c.backend.fixtures) {
            (BackendMode::Replay, Some(dir)) => BackendSet::replay(dir)?,
            (BackendMode::Deterministic, Some(dir)) => BackendSet::deterministic(dir, c.backend.seed)?,
            _ => BackendSet::live(&c.backend.embedding, &c.backend.generation)?,
        },
        _ => return Err(CliError::Input("choose --replay DIR, --deterministic DIR or --live --config FILE".into())),
    };

    let corpus_path = args
        .corpus
        .clone()
        .or_else(|| config.as_ref().map(|c| c.corpus.clone()))
        .ok_or_else(|| CliError::Input("--corpus is required without --config".into()))?;
    let corpus = Arc::new(load_corpus(&corpus_path)?);
    let mut retrieval = config.as_ref().map(|c| c.retrieval.clone()).unwrap_or_default();
    if let Some(k) = args.k {
        retrieval.k = k;
    }
    let templates = match config.as_ref().and_then(|c| c.templates.as_deref()) {
        Some(dir) => PromptTemplate::load_dir(dir)?,
        None => PromptTemplate::bundled(),
    };
    let index_path = args.index.clone().or_else(|| config.as_ref().map(|c| c.index.clone()));
    let index: AnnIndex = match index_path.filter(|p| p.exists()) {
        Some(p) => annindex::load(&p).map_err(CliError::input)?,
        None => {
            let params = BuildParams {
                seed: args.seed,
                ..BuildParams::default()
            };
            build_index(&corpus, backends.embedder.as_ref(), &retrieval.kinds, params).await?
        }
    };
    let generation = config.as_ref().map(|c| c.generation_params()).unwrap_or_default();
    let pipeline = Pipeline {
        corpus: Arc::clone(&corpus),
        index: Arc::new(index),
        embedder: backends.embedder,
        generator: backends.generator,
        templates: Arc::new(templates),
        retrieval,
        generation,
    };
    let result = pipeline.assess_with_query(&input, args.query.as_deref()).await?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
    } else {
        print!("{}", render::assessment(&result, &corpus));
    }
    Ok(())
}

/// Dimension of the first recorded vector in a fixture directory.
fn recorded_dimension(dir: &Path) -> Result<usize, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "vec") {
            return Ok(read_vec_file(&path)?.dimension());
        }
    }
    Err(CliError::Backend(format!("no embeddings were recorded in {}", dir.display())))
}

async fn eval_cmd(args: &EvalArgs) -> Result<(), CliError> {
    let mut scenarios = load_scenarios(&args.scenarios)?;
    let corpus = Arc::new(load_corpus(&args.corpus)?);
    let mut components = EvalComponents::new(corpus);
    if let Some(dir) = &args.templates {
        components.templates = Arc::new(PromptTemplate::load_dir(dir)?);
    }
    let config = args.config.as_deref().map(load_service_config).transpose()?;
    if let Some(c) = &config {
        components.retrieval = c.retrieval.clone();
        components.generation = c.generation_params();
    }
    if args.live {
        let c = config.as_ref().expect("clap requires --config with --live");
        let (emb, generator) = (&c.backend.embedding, &c.backend.generation);
        components.live = Some(match &args.record {
            Some(dir) => BackendSet {
                mode: BackendMode::Live,
                embedder: Arc::new(RecordingEmbedder::new(HttpBackend::new(emb.clone())?, dir)?),
                generator: Arc::new(RecordingGenerator::new(HttpBackend::new(generator.clone())?, dir)?),
                fixtures: None,
            },
            None => BackendSet::live(emb, generator)?,
        });
        for s in &mut scenarios {
            s.backend = BackendMode::Live;
        }
    }
    let report = run_scenarios(&scenarios, &components, &args.out).await;
    let (table, records) = emit_report(&report, &args.out)?;
    print!("{}", render_table(&report));
    println!("report: {}\nrecords: {}", table.display(), records.display());

    if let (Some(dir), Some(c)) = (&args.record, &config) {
        let manifest = FixtureManifest {
            embedding_model: c.backend.embedding.model_id.clone(),
            generation_model: c.backend.generation.model_id.clone(),
            dimension: recorded_dimension(dir)?,
            hash_seed: None,
            provenance: format!("recorded from live backends on {}", Utc::now().format("%Y-%m-%d")),
        };
        manifest.save(dir)?;
        println!("fixtures: {}", dir.display());
    }
    Ok(())
}

async fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { source, out, edition } => ingest(&source, &out, &edition),
        Command::BuildIndex(args) => build_index_cmd(&args).await,
        Command::Prescreen { answers, catalog, json } => prescreen_cmd(&answers, catalog.as_deref(), json),
        Command::Assess(args) => assess_cmd(&args).await,
        Command::Eval(args) => eval_cmd(&args).await,
        Command::Serve { config } => {
            let config = load_service_config(&config)?;
            taiscan_service::serve(config).await.map_err(CliError::input)
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_filter = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_filter)),
        )
        .init();
    match run(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::Gated) {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
