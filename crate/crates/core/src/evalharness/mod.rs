//! Scenario-driven evaluation: run configured assessment scenarios through
//! the pipeline and compare predicted risk levels and article sets with the
//! expected ones.
//!
//! Evaluation bypasses the pre-screening gate on purpose (most reference
//! scenarios would not pass it); every report says so.

mod record;
mod report;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::annindex::BuildParams;
use crate::backends::{BackendError, BackendMode, BackendSet};
use crate::corpus::{Corpus, UnitKind};
use crate::ragflow::{
    article_numbers, build_index, AssessmentInput, AssessmentResult, GenerationParams, Pipeline,
    PromptTemplate, RagError, RetrievalSettings, RiskLevel, HORIZONTAL_ARTICLES,
};

pub use record::{
    load_transcript, record_fixtures, record_from_transcripts, ScriptedGenerator, Transcript,
    TRANSCRIPT_GENERATION_MODEL, TRANSCRIPT_PROVENANCE,
};
pub use report::{
    emit_report, parse_records, render_records, render_table, EvalReport, ScenarioOutcome,
    RECORDS_FILE, REPORT_FILE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("malformed report records: {0}")]
    Records(String),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn lenient_level<'de, D: Deserializer<'de>>(d: D) -> Result<RiskLevel, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

/// One scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Short system description shown in the report's Scenario column.
    #[serde(default)]
    pub description: String,
    #[serde(deserialize_with = "lenient_level")]
    pub expected_risk: RiskLevel,
    /// Compared as a set; order is irrelevant.
    pub expected_articles: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
    pub backend: BackendMode,
    /// Fixture directory; relative paths are resolved against the config
    /// file's directory.
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    /// Where this scenario's raw result goes; defaults to the run's output
    /// directory.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Replaces the query composed from the input fields.
    #[serde(default)]
    pub query_override: Option<String>,
    pub input: AssessmentInput,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut config: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        config.fixtures = config.fixtures.map(|p| base_dir.join(p));
        config.output_dir = config.output_dir.map(|p| base_dir.join(p));
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(format!("name {:?} must be non-empty [A-Za-z0-9_-]", self.name));
        }
        if self.backend != BackendMode::Live && self.fixtures.is_none() {
            return Err(format!("{} mode requires a fixtures directory", self.backend));
        }
        self.input.validate().map_err(|e| e.to_string())
    }

    pub fn expected_set(&self) -> BTreeSet<u32> {
        self.expected_articles.iter().copied().collect()
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    ScenarioConfig::from_toml(&text, base).map_err(|message| EvalError::Config {
        path: path.to_path_buf(),
        message,
    })
}

/// Every `*.toml` in `dir`, in file-name order.
pub fn load_scenarios(dir: &Path) -> Result<Vec<ScenarioConfig>, EvalError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let configs = paths.iter().map(|p| load_scenario(p)).collect::<Result<Vec<_>, _>>()?;
    let mut names = BTreeSet::new();
    for (c, p) in configs.iter().zip(&paths) {
        if !names.insert(c.name.clone()) {
            return Err(EvalError::Config {
                path: p.clone(),
                message: format!("duplicate scenario name {:?}", c.name),
            });
        }
    }
    Ok(configs)
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Whether every horizontal-obligation article was cited.
pub fn horizontal_coverage(predicted: &BTreeSet<u32>) -> bool {
    HORIZONTAL_ARTICLES.iter().all(|a| predicted.contains(a))
}

/// Shared inputs of a run; live backends are only needed for live scenarios.
#[derive(Clone)]
pub struct EvalComponents {
    pub corpus: Arc<Corpus>,
    pub templates: Arc<PromptTemplate>,
    pub retrieval: RetrievalSettings,
    pub generation: GenerationParams,
    /// Forest shape; the seed is taken from each scenario.
    pub build: BuildParams,
    pub live: Option<BackendSet>,
}

impl EvalComponents {
    pub fn new(corpus: Arc<Corpus>) -> Self {
        Self {
            corpus,
            templates: Arc::new(PromptTemplate::bundled()),
            retrieval: RetrievalSettings::default(),
            generation: GenerationParams::default(),
            build: BuildParams::default(),
            live: None,
        }
    }

    fn index_kinds(&self) -> Vec<UnitKind> {
        self.retrieval.kinds.clone()
    }
}

type PipelineKey = (BackendMode, Option<PathBuf>, u64);

/// Builds (or reuses) the pipeline a scenario runs on. Index builds are
/// cached per backend mode, fixture directory and seed.
async fn pipeline_for(
    scenario: &ScenarioConfig,
    components: &EvalComponents,
    cache: &mut HashMap<PipelineKey, Pipeline>,
) -> Result<Pipeline, EvalError> {
    let key = (scenario.backend, scenario.fixtures.clone(), scenario.seed);
    if let Some(p) = cache.get(&key) {
        return Ok(p.clone());
    }
    let backends = match scenario.backend {
        BackendMode::Replay => BackendSet::replay(fixtures_of(scenario)?)?,
        BackendMode::Deterministic => BackendSet::deterministic(fixtures_of(scenario)?, scenario.seed)?,
        BackendMode::Live => components.live.clone().ok_or_else(|| {
            EvalError::Backend(BackendError::InvalidRequest(
                "live scenario but no live backends configured".into(),
            ))
        })?,
    };
    let params = BuildParams {
        seed: scenario.seed,
        ..components.build
    };
    let index = build_index(
        &components.corpus,
        backends.embedder.as_ref(),
        &components.index_kinds(),
        params,
    )
    .await?;
    let pipeline = Pipeline {
        corpus: components.corpus.clone(),
        index: Arc::new(index),
        embedder: backends.embedder,
        generator: backends.generator,
        templates: components.templates.clone(),
        retrieval: components.retrieval.clone(),
        generation: components.generation,
    };
    cache.insert(key, pipeline.clone());
    Ok(pipeline)
}

fn fixtures_of(scenario: &ScenarioConfig) -> Result<&Path, EvalError> {
    scenario.fixtures.as_deref().ok_or_else(|| EvalError::Config {
        path: PathBuf::from(&scenario.name),
        message: "no fixtures directory".into(),
    })
}

fn outcome(
    scenario: &ScenarioConfig,
    models: Option<(&str, &str)>,
    result: Result<&AssessmentResult, String>,
) -> ScenarioOutcome {
    let expected = scenario.expected_set();
    let (embedding_model, generation_model) = models
        .map(|(e, g)| (e.to_string(), g.to_string()))
        .unwrap_or_default();
    match result {
        Ok(r) => {
            let predicted: Vec<u32> = r.articles.iter().map(|a| a.ordinal()).collect();
            let set = article_numbers(&r.articles);
            ScenarioOutcome {
                name: scenario.name.clone(),
                description: scenario.description.clone(),
                role: scenario.input.role,
                backend: scenario.backend,
                embedding_model,
                generation_model,
                expected_risk: scenario.expected_risk,
                predicted_risk: Some(r.risk_level),
                level_match: r.risk_level == scenario.expected_risk,
                expected_articles: expected.iter().copied().collect(),
                predicted_articles: predicted,
                jaccard: jaccard(&expected, &set),
                horizontal_coverage: horizontal_coverage(&set),
                error: None,
            }
        }
        Err(message) => ScenarioOutcome {
            name: scenario.name.clone(),
            description: scenario.description.clone(),
            role: scenario.input.role,
            backend: scenario.backend,
            embedding_model,
            generation_model,
            expected_risk: scenario.expected_risk,
            predicted_risk: None,
            level_match: false,
            expected_articles: expected.iter().copied().collect(),
            predicted_articles: Vec::new(),
            jaccard: 0.0,
            horizontal_coverage: false,
            error: Some(message),
        },
    }
}

fn write_raw(dir: &Path, name: &str, result: &AssessmentResult) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format!("{name}.result.json"));
    let text = serde_json::to_string_pretty(result).expect("result serializes") + "\n";
    std::fs::write(&path, text).map_err(io_err(&path))
}

/// Runs every scenario through the assessment pipeline, skipping the
/// pre-screening gate. Scenario failures are recorded in the report, never
/// propagated. Raw results go to `<output_dir>/raw/<name>.result.json`
/// unless a scenario names its own output directory.
///
/// Replay and deterministic scenarios run concurrently; live ones run one at
/// a time afterwards.
pub async fn run_scenarios(
    configs: &[ScenarioConfig],
    components: &EvalComponents,
    output_dir: &Path,
) -> EvalReport {
    let mut cache = HashMap::new();
    let mut slots: Vec<Option<ScenarioOutcome>> = vec![None; configs.len()];
    let mut offline = tokio::task::JoinSet::new();
    let mut live = Vec::new();

    for (i, scenario) in configs.iter().enumerate() {
        let pipeline = match pipeline_for(scenario, components, &mut cache).await {
            Ok(p) => p,
            Err(e) => {
                tracing::warn!(scenario = %scenario.name, error = %e, "scenario setup failed");
                slots[i] = Some(outcome(scenario, None, Err(e.to_string())));
                continue;
            }
        };
        if scenario.backend == BackendMode::Live {
            live.push((i, pipeline));
        } else {
            let scenario = scenario.clone();
            offline.spawn(async move {
                let result = pipeline
                    .assess_with_query(&scenario.input, scenario.query_override.as_deref())
                    .await;
                (i, pipeline, result)
            });
        }
    }

    let mut finished = Vec::new();
    while let Some(joined) = offline.join_next().await {
        finished.push(joined.expect("scenario task panicked"));
    }
    for (i, pipeline) in live {
        let s = &configs[i];
        let result = pipeline
            .assess_with_query(&s.input, s.query_override.as_deref())
            .await;
        finished.push((i, pipeline, result));
    }

    let mut prompt_version = components.templates.version().to_string();
    for (i, pipeline, result) in finished {
        let scenario = &configs[i];
        let models = (pipeline.embedding_model(), pipeline.generation_model());
        let outcome = match result {
            Ok(r) => {
                prompt_version = r.prompt_version.clone();
                let dir = scenario
                    .output_dir
                    .clone()
                    .unwrap_or_else(|| output_dir.join("raw"));
                let out = outcome(scenario, Some(models), Ok(&r));
                match write_raw(&dir, &scenario.name, &r) {
                    Ok(()) => out,
                    Err(e) => outcome(scenario, Some(models), Err(e.to_string())),
                }
            }
            Err(e) => {
                tracing::warn!(scenario = %scenario.name, error = %e, "scenario failed");
                outcome(scenario, Some(models), Err(e.to_string()))
            }
        };
        slots[i] = Some(outcome);
    }

    let scenarios: Vec<ScenarioOutcome> = slots.into_iter().map(|o| o.expect("every slot filled")).collect();
    let any_live = configs.iter().any(|c| c.backend == BackendMode::Live);
    EvalReport::new(
        scenarios,
        prompt_version,
        any_live.then(chrono::Utc::now),
    )
}
