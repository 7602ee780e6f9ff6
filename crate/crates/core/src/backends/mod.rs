//! Embedding and generation model backends.
//!
//! Every backend implements [`EmbeddingBackend`] and/or
//! [`GenerationBackend`]. Implementations:
//!
//! * [`HttpBackend`] talks to an Ollama-compatible server (also used for the
//!   HuggingFace deployment, which exposes the same contract elsewhere);
//! * [`HashEmbedder`] is a seeded, dependency-free embedding for tests and
//!   offline runs;
//! * [`ReplayEmbedder`] / [`ReplayGenerator`] serve recorded responses keyed
//!   by the SHA-256 of the request text, and the `Recording*` wrappers write
//!   such fixtures.

mod config;
mod fixtures;
mod hash_embed;
mod http;
mod replay;
mod vector;

use async_trait::async_trait;
use thiserror::Error;

pub use config::{BackendConfig, Provider};
pub use fixtures::{BackendMode, BackendSet, FixtureManifest, MANIFEST_FILE};
pub use hash_embed::{HashEmbedder, DEFAULT_HASH_DIMENSION};
pub use http::HttpBackend;
pub use replay::{
    digest_hex, read_vec_file, write_vec_file, RecordingEmbedder, RecordingGenerator,
    ReplayEmbedder, ReplayGenerator,
};
pub use vector::EmbeddingVector;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend rejected the request with HTTP {status}: {message}")]
    Rejected { status: u16, message: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("no recorded {kind} fixture for digest {digest}")]
    ReplayMiss { kind: &'static str, digest: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("fixture I/O failure on {path}: {source}")]
    Fixture {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl BackendError {
    /// Transport-level failures; the pipeline maps these to "bad gateway".
    pub fn is_unavailable(&self) -> bool {
        matches!(self, BackendError::Unavailable { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

impl GenerationRequest {
    pub const DEFAULT_MAX_TOKENS: u32 = 1024;

    /// Request with reproducibility-first defaults: temperature 0, seed 0.
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            seed: Some(0),
            max_tokens: Self::DEFAULT_MAX_TOKENS,
        }
    }

    /// Request using the decoding parameters of a backend configuration.
    pub fn with_config(prompt: impl Into<String>, config: &BackendConfig) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: config.temperature,
            seed: config.request_seed,
            max_tokens: config.max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::InvalidRequest("prompt is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// Advertised output dimension, if known before the first call.
    fn dimension(&self) -> Option<usize>;

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError>;

    /// Embeds every text in order; any failure aborts the whole batch.
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::InvalidRequest("embedding batch is empty".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for text in texts {
            out.push(self.embed_text(text).await?);
        }
        Ok(out)
    }

    /// Cheap reachability check used by health reporting.
    async fn probe(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    fn model_id(&self) -> &str;

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError>;

    async fn probe(&self) -> Result<(), BackendError> {
        Ok(())
    }
}

pub(crate) fn check_text(text: &str) -> Result<(), BackendError> {
    if text.trim().is_empty() {
        Err(BackendError::InvalidRequest("text to embed is empty".into()))
    } else {
        Ok(())
    }
}

/// Applies the completion contract: trailing whitespace removed, empty
/// completions rejected.
pub(crate) fn finish_completion(mut text: String) -> Result<String, BackendError> {
    let trimmed = text.trim_end().len();
    text.truncate(trimmed);
    if text.trim().is_empty() {
        Err(BackendError::EmptyCompletion)
    } else {
        Ok(text)
    }
}
