//! Shared, read-only service state assembled from the configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::Serialize;
use taiscan_core::annindex::{self, AnnIndex};
use taiscan_core::backends::{BackendMode, BackendSet, EmbeddingBackend};
use taiscan_core::corpus::{load_corpus, parse_document, Corpus, CorpusMeta, UNITS_EXTENSION};
use taiscan_core::prescreen::Catalog;
use taiscan_core::ragflow::{Pipeline, PromptTemplate};

use crate::audit::AuditLog;
use crate::config::ServiceConfig;
use crate::gate::GateKeeper;
use crate::ServiceError;

/// Index availability; assessment is disabled unless `Loaded`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum IndexState {
    Loaded { path: PathBuf, items: usize, dimension: usize },
    Missing { path: PathBuf },
    Unusable { path: PathBuf, reason: String },
}

pub struct AppState {
    pub corpus: Arc<Corpus>,
    pub catalog: Arc<Catalog>,
    pub templates: Arc<PromptTemplate>,
    pub backends: BackendSet,
    /// Present only when the index loaded and agrees with corpus and embedder.
    pub pipeline: Option<Pipeline>,
    pub index_state: IndexState,
    pub gate: GateKeeper,
    pub audit: AuditLog,
    pub config_digest: String,
    pub probe_timeout: Duration,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("units", &self.corpus.len())
            .field("backends", &self.backends)
            .field("index_state", &self.index_state)
            .field("config_digest", &self.config_digest)
            .finish_non_exhaustive()
    }
}

/// Loads a `.units` store, or parses raw regulation text stamped with the
/// file's modification time.
pub fn load_corpus_file(path: &Path) -> Result<Corpus, ServiceError> {
    let corpus_err = |e: taiscan_core::corpus::CorpusError| ServiceError::Startup(format!("corpus {}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == UNITS_EXTENSION) {
        return load_corpus(path).map_err(corpus_err);
    }
    let io_err = |e: std::io::Error| ServiceError::Startup(format!("corpus {}: {e}", path.display()));
    let raw = std::fs::read_to_string(path).map_err(io_err)?;
    let modified: DateTime<Utc> = std::fs::metadata(path).and_then(|m| m.modified()).map_err(io_err)?.into();
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    parse_document(&raw, CorpusMeta::new(name, "source", modified)).map_err(corpus_err)
}

/// Checks that every index item names a corpus unit and that the index
/// dimension matches what the embedder produces.
fn check_index(index: &AnnIndex, corpus: &Corpus, embedder: &dyn EmbeddingBackend) -> Result<(), String> {
    if let Some(item) = index.items().iter().find(|i| !corpus.contains(&i.unit_ref)) {
        return Err(format!("index item {} is not in the corpus", item.unit_ref));
    }
    match embedder.dimension() {
        Some(d) if d != index.dimension() => Err(format!(
            "index dimension {} differs from embedding dimension {d}",
            index.dimension()
        )),
        _ => Ok(()),
    }
}

fn load_index(path: &Path, corpus: &Corpus, embedder: &dyn EmbeddingBackend) -> (Option<AnnIndex>, IndexState) {
    if !path.exists() {
        return (None, IndexState::Missing { path: path.to_path_buf() });
    }
    let unusable = |reason: String| IndexState::Unusable {
        path: path.to_path_buf(),
        reason,
    };
    match annindex::load(path) {
        Err(e) => (None, unusable(e.to_string())),
        Ok(index) => match check_index(&index, corpus, embedder) {
            Err(reason) => (None, unusable(reason)),
            Ok(()) => {
                let state = IndexState::Loaded {
                    path: path.to_path_buf(),
                    items: index.len(),
                    dimension: index.dimension(),
                };
                (Some(index), state)
            }
        },
    }
}

impl AppState {
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let corpus = Arc::new(load_corpus_file(&config.corpus)?);
        let catalog = match &config.catalog {
            Some(p) => Catalog::load(p).map_err(|e| ServiceError::Startup(e.to_string()))?,
            None => Catalog::bundled(),
        };
        let dangling = catalog.dangling_citations(&corpus);
        if !dangling.is_empty() {
            tracing::warn!(?dangling, "catalog cites units missing from the corpus");
        }
        let templates = match &config.templates {
            Some(dir) => PromptTemplate::load_dir(dir).map_err(|e| ServiceError::Startup(e.to_string()))?,
            None => PromptTemplate::bundled(),
        };
        let backend_err = |e: taiscan_core::backends::BackendError| ServiceError::Startup(format!("backends: {e}"));
        let b = &config.backend;
        let backends = match (b.mode, &b.fixtures) {
            (BackendMode::Live, _) => BackendSet::live(&b.embedding, &b.generation).map_err(backend_err)?,
            (BackendMode::Replay, Some(dir)) => BackendSet::replay(dir).map_err(backend_err)?,
            (BackendMode::Deterministic, Some(dir)) => BackendSet::deterministic(dir, b.seed).map_err(backend_err)?,
            (mode, None) => return Err(ServiceError::Config(format!("{mode} mode requires backend.fixtures"))),
        };
        let (index, index_state) = load_index(&config.index, &corpus, backends.embedder.as_ref());
        if !matches!(index_state, IndexState::Loaded { .. }) {
            tracing::warn!(?index_state, "assessment disabled: index not available");
        }
        let templates = Arc::new(templates);
        let pipeline = index.map(|index| Pipeline {
            corpus: Arc::clone(&corpus),
            index: Arc::new(index),
            embedder: Arc::clone(&backends.embedder),
            generator: Arc::clone(&backends.generator),
            templates: Arc::clone(&templates),
            retrieval: config.retrieval.clone(),
            generation: config.generation_params(),
        });
        let audit = AuditLog::open(&config.audit_log).map_err(|e| ServiceError::Startup(e.to_string()))?;
        Ok(Self {
            corpus,
            catalog: Arc::new(catalog),
            templates,
            backends,
            pipeline,
            index_state,
            gate: GateKeeper::from_secret(config.gate.secret.as_deref(), config.gate.ttl_secs),
            audit,
            config_digest: config.digest(),
            probe_timeout: Duration::from_millis(config.probe_timeout_ms),
        })
    }
}
