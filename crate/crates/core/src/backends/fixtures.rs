//! Backend selection by mode, and the manifest that describes a fixture
//! directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    BackendConfig, BackendError, EmbeddingBackend, GenerationBackend, HashEmbedder, HttpBackend,
    ReplayEmbedder, ReplayGenerator,
};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Where embeddings and completions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    /// Recorded embeddings and completions.
    Replay,
    /// Seeded hash embeddings computed on the fly, recorded completions.
    Deterministic,
    /// HTTP model servers.
    Live,
}

impl BackendMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendMode::Replay => "replay",
            BackendMode::Deterministic => "deterministic",
            BackendMode::Live => "live",
        }
    }
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendMode {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "replay" => Ok(BackendMode::Replay),
            "deterministic" => Ok(BackendMode::Deterministic),
            "live" => Ok(BackendMode::Live),
            _ => Err(BackendError::InvalidRequest(format!(
                "backend mode must be replay, deterministic or live, got {s:?}"
            ))),
        }
    }
}

/// `manifest.toml` of a fixture directory: which models the recorded
/// responses stand for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureManifest {
    pub embedding_model: String,
    pub generation_model: String,
    pub dimension: usize,
    /// Seed of the hash embedding the vectors were produced with, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_seed: Option<u64>,
    /// How the fixtures were produced.
    #[serde(default)]
    pub provenance: String,
}

impl FixtureManifest {
    pub fn load(dir: &Path) -> Result<Self, BackendError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| BackendError::Fixture {
            path: path.clone(),
            source,
        })?;
        let manifest: Self = toml::from_str(&text)
            .map_err(|e| BackendError::MalformedResponse(format!("{}: {e}", path.display())))?;
        if manifest.dimension == 0 {
            return Err(BackendError::MalformedResponse(format!(
                "{}: dimension must be positive",
                path.display()
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<(), BackendError> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|source| BackendError::Fixture { path, source })
    }
}

/// An embedding and a generation backend chosen together.
#[derive(Clone)]
pub struct BackendSet {
    pub mode: BackendMode,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub generator: Arc<dyn GenerationBackend>,
    /// Fixture directory for replay and deterministic modes.
    pub fixtures: Option<PathBuf>,
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendSet")
            .field("mode", &self.mode)
            .field("embedding_model", &self.embedder.model_id())
            .field("generation_model", &self.generator.model_id())
            .field("fixtures", &self.fixtures)
            .finish()
    }
}

impl BackendSet {
    pub fn replay(dir: &Path) -> Result<Self, BackendError> {
        let manifest = FixtureManifest::load(dir)?;
        Ok(Self {
            mode: BackendMode::Replay,
            embedder: Arc::new(
                ReplayEmbedder::new(dir, &manifest.embedding_model).with_dimension(manifest.dimension),
            ),
            generator: Arc::new(ReplayGenerator::new(dir, &manifest.generation_model)),
            fixtures: Some(dir.to_path_buf()),
        })
    }

    /// Hash embeddings with `seed` at the manifest's dimension; completions
    /// still come from the fixtures.
    pub fn deterministic(dir: &Path, seed: u64) -> Result<Self, BackendError> {
        let manifest = FixtureManifest::load(dir)?;
        Ok(Self {
            mode: BackendMode::Deterministic,
            embedder: Arc::new(HashEmbedder::new(seed, manifest.dimension)),
            generator: Arc::new(ReplayGenerator::new(dir, &manifest.generation_model)),
            fixtures: Some(dir.to_path_buf()),
        })
    }

    pub fn live(embedding: &BackendConfig, generation: &BackendConfig) -> Result<Self, BackendError> {
        Ok(Self {
            mode: BackendMode::Live,
            embedder: Arc::new(HttpBackend::new(embedding.clone())?),
            generator: Arc::new(HttpBackend::new(generation.clone())?),
            fixtures: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = FixtureManifest {
            embedding_model: "e".into(),
            generation_model: "g".into(),
            dimension: 8,
            hash_seed: Some(0),
            provenance: "test".into(),
        };
        m.save(dir.path()).unwrap();
        assert_eq!(FixtureManifest::load(dir.path()).unwrap(), m);
        let set = BackendSet::replay(dir.path()).unwrap();
        assert_eq!(set.embedder.model_id(), "e");
        assert_eq!(set.embedder.dimension(), Some(8));
        assert_eq!(set.generator.model_id(), "g");
        let det = BackendSet::deterministic(dir.path(), 3).unwrap();
        assert_eq!(det.embedder.dimension(), Some(8));
    }

    #[test]
    fn missing_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(BackendSet::replay(dir.path()).is_err());
        assert_eq!("Replay".parse::<BackendMode>().unwrap(), BackendMode::Replay);
        assert!("mock".parse::<BackendMode>().is_err());
    }
}
