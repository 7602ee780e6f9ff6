//! Recorded-response fixtures.
//!
//! A fixture directory holds `<sha256>.txt` files (completions, keyed by the
//! exact prompt) and `<sha256>.vec` files (embeddings, keyed by the exact
//! text). A `.vec` file is the dimension on the first line followed by one
//! decimal value per line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use sha2::{Digest, Sha256};

use super::{
    check_text, finish_completion, BackendError, EmbeddingBackend, EmbeddingVector,
    GenerationBackend, GenerationRequest,
};

pub fn digest_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn fixture_err(path: &Path) -> impl FnOnce(std::io::Error) -> BackendError + '_ {
    move |source| BackendError::Fixture {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_vec_file(path: &Path, vector: &EmbeddingVector) -> Result<(), BackendError> {
    let mut out = String::new();
    let _ = writeln!(out, "{}", vector.dimension());
    for v in vector.values() {
        // `Display` for f32 is the shortest string that parses back exactly.
        let _ = writeln!(out, "{v}");
    }
    std::fs::write(path, out).map_err(fixture_err(path))
}

pub fn read_vec_file(path: &Path) -> Result<EmbeddingVector, BackendError> {
    let text = std::fs::read_to_string(path).map_err(fixture_err(path))?;
    parse_vec(&text).map_err(|m| BackendError::MalformedResponse(format!("{}: {m}", path.display())))
}

fn parse_vec(text: &str) -> Result<EmbeddingVector, String> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let dim: usize = lines
        .next()
        .ok_or("empty vector file")?
        .parse()
        .map_err(|e| format!("bad dimension line: {e}"))?;
    let values = lines
        .map(|l| l.parse::<f32>().map_err(|e| format!("bad value `{l}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != dim {
        return Err(format!("declared dimension {dim}, found {} values", values.len()));
    }
    EmbeddingVector::new(values).map_err(|e| e.to_string())
}

/// Serves embeddings recorded in a fixture directory.
#[derive(Debug, Clone)]
pub struct ReplayEmbedder {
    dir: PathBuf,
    model_id: String,
    dimension: Option<usize>,
}

impl ReplayEmbedder {
    pub fn new(dir: impl Into<PathBuf>, model_id: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            model_id: model_id.into(),
            dimension: None,
        }
    }

    pub fn with_dimension(mut self, dimension: usize) -> Self {
        self.dimension = Some(dimension);
        self
    }

    pub fn fixture_path(&self, text: &str) -> PathBuf {
        self.dir.join(format!("{}.vec", digest_hex(text)))
    }
}

#[async_trait]
impl EmbeddingBackend for ReplayEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        check_text(text)?;
        let path = self.fixture_path(text);
        if !path.exists() {
            return Err(BackendError::ReplayMiss {
                kind: "embedding",
                digest: digest_hex(text),
            });
        }
        let v = read_vec_file(&path)?;
        if let Some(expected) = self.dimension {
            if v.dimension() != expected {
                return Err(BackendError::DimensionMismatch {
                    expected,
                    got: v.dimension(),
                });
            }
        }
        Ok(v)
    }
}

/// Serves completions recorded in a fixture directory.
#[derive(Debug, Clone)]
pub struct ReplayGenerator {
    dir: PathBuf,
    model_id: String,
}

impl ReplayGenerator {
    pub fn new(dir: impl Into<PathBuf>, model_id: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            model_id: model_id.into(),
        }
    }

    pub fn fixture_path(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", digest_hex(prompt)))
    }
}

#[async_trait]
impl GenerationBackend for ReplayGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        request.validate()?;
        let path = self.fixture_path(&request.prompt);
        match tokio::fs::read_to_string(&path).await {
            Ok(text) => finish_completion(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(BackendError::ReplayMiss {
                kind: "generation",
                digest: digest_hex(&request.prompt),
            }),
            Err(e) => Err(fixture_err(&path)(e)),
        }
    }
}

/// Passes requests to `inner` and records every successful response.
#[derive(Debug)]
pub struct RecordingEmbedder<B> {
    inner: B,
    dir: PathBuf,
}

impl<B> RecordingEmbedder<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(fixture_err(&dir))?;
        Ok(Self { inner, dir })
    }
}

#[async_trait]
impl<B: EmbeddingBackend> EmbeddingBackend for RecordingEmbedder<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dimension(&self) -> Option<usize> {
        self.inner.dimension()
    }

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let v = self.inner.embed_text(text).await?;
        write_vec_file(&self.dir.join(format!("{}.vec", digest_hex(text))), &v)?;
        Ok(v)
    }

    async fn probe(&self) -> Result<(), BackendError> {
        self.inner.probe().await
    }
}

/// Passes requests to `inner` and records completions, including empty ones.
#[derive(Debug)]
pub struct RecordingGenerator<B> {
    inner: B,
    dir: PathBuf,
}

impl<B> RecordingGenerator<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(fixture_err(&dir))?;
        Ok(Self { inner, dir })
    }
}

#[async_trait]
impl<B: GenerationBackend> GenerationBackend for RecordingGenerator<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let path = self.dir.join(format!("{}.txt", digest_hex(&request.prompt)));
        let result = self.inner.generate(request).await;
        let recorded = match &result {
            Ok(text) => Some(text.as_str()),
            Err(BackendError::EmptyCompletion) => Some(""),
            Err(_) => None,
        };
        if let Some(text) = recorded {
            tokio::fs::write(&path, text).await.map_err(fixture_err(&path))?;
        }
        result
    }

    async fn probe(&self) -> Result<(), BackendError> {
        self.inner.probe().await
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::HashEmbedder;

    struct Fixed(&'static str);

    #[async_trait]
    impl GenerationBackend for Fixed {
        fn model_id(&self) -> &str {
            "fixed"
        }
        async fn generate(&self, _: &GenerationRequest) -> Result<String, BackendError> {
            finish_completion(self.0.to_string())
        }
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            digest_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn vec_file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let v = HashEmbedder::new(5, 48).embed("record keeping").unwrap();
        let path = dir.path().join("x.vec");
        write_vec_file(&path, &v).unwrap();
        assert_eq!(read_vec_file(&path).unwrap(), v);
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("48\n"));
    }

    #[test]
    fn vec_file_dimension_checked() {
        assert!(parse_vec("3\n1\n2\n").is_err());
        assert!(parse_vec("").is_err());
        assert!(parse_vec("2\n1\nnan\n").is_err());
    }

    #[tokio::test]
    async fn record_then_replay_generation() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingGenerator::new(Fixed("recorded text\n"), dir.path()).unwrap();
        let req = GenerationRequest::new("prompt one");
        assert_eq!(rec.generate(&req).await.unwrap(), "recorded text");

        let replay = ReplayGenerator::new(dir.path(), "replay");
        assert_eq!(replay.generate(&req).await.unwrap(), "recorded text");
        assert_eq!(replay.generate(&req).await.unwrap(), "recorded text");
        let miss = replay.generate(&GenerationRequest::new("prompt two")).await;
        assert!(matches!(miss, Err(BackendError::ReplayMiss { kind: "generation", .. })));
    }

    #[tokio::test]
    async fn empty_completion_is_recorded_and_replayed() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingGenerator::new(Fixed("  "), dir.path()).unwrap();
        let req = GenerationRequest::new("p");
        assert!(matches!(rec.generate(&req).await, Err(BackendError::EmptyCompletion)));
        let replay = ReplayGenerator::new(dir.path(), "replay");
        assert!(matches!(replay.generate(&req).await, Err(BackendError::EmptyCompletion)));
    }

    #[tokio::test]
    async fn record_then_replay_embedding() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingEmbedder::new(HashEmbedder::new(1, 16), dir.path()).unwrap();
        let v = rec.embed_text("data governance").await.unwrap();
        let replay = ReplayEmbedder::new(dir.path(), "replay").with_dimension(16);
        assert_eq!(replay.embed_text("data governance").await.unwrap(), v);
        assert!(matches!(
            replay.embed_text("other").await,
            Err(BackendError::ReplayMiss { kind: "embedding", .. })
        ));
    }
}
