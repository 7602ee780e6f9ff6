//! Producing replay fixtures from scripted completions.
//!
//! A transcript holds the two completions of one scenario (the query rewrite
//! and the answer). Running the real pipeline over a [`ScriptedGenerator`]
//! wrapped in the recording backends writes the fixture files exactly as a
//! live recording would, keyed by the prompts the pipeline actually built.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{io_err, EvalComponents, EvalError, ScenarioConfig};
use crate::annindex::BuildParams;
use crate::backends::{
    BackendError, EmbeddingBackend, FixtureManifest, GenerationBackend, GenerationRequest,
    HashEmbedder, RecordingEmbedder, RecordingGenerator,
};
use crate::ragflow::{build_index, AssessmentResult, Pipeline};

/// Model id recorded for completions that come from transcripts.
pub const TRANSCRIPT_GENERATION_MODEL: &str = "scripted-transcript/v1";

/// Hands out a fixed list of completions in order.
#[derive(Debug)]
pub struct ScriptedGenerator {
    model_id: String,
    responses: Mutex<VecDeque<String>>,
}

impl ScriptedGenerator {
    pub fn new(model_id: impl Into<String>, responses: impl IntoIterator<Item = String>) -> Self {
        Self {
            model_id: model_id.into(),
            responses: Mutex::new(responses.into_iter().collect()),
        }
    }

    pub fn remaining(&self) -> usize {
        self.responses.lock().expect("script lock").len()
    }
}

#[async_trait]
impl GenerationBackend for ScriptedGenerator {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        request.validate()?;
        let next = self.responses.lock().expect("script lock").pop_front();
        match next {
            Some(text) if text.trim().is_empty() => Err(BackendError::EmptyCompletion),
            Some(text) => Ok(text.trim_end().to_string()),
            None => Err(BackendError::MalformedResponse("script exhausted".into())),
        }
    }
}

/// The two completions of one scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    /// Completion for the rewrite prompt; empty exercises the fallback.
    pub rewrite: String,
    /// Completion for the answer prompt.
    pub answer: String,
}

pub fn load_transcript(path: &Path) -> Result<Transcript, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| EvalError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Records fixtures for `runs` into `dir` and returns the manifest written
/// plus each scenario's result. Embeddings come from the seeded hash
/// embedding; every corpus unit is embedded so that indexes over any unit
/// kinds can be rebuilt from the fixtures.
pub async fn record_fixtures(
    components: &EvalComponents,
    runs: &[(ScenarioConfig, Transcript)],
    dir: &Path,
    hash_seed: u64,
    dimension: usize,
    provenance: &str,
) -> Result<(FixtureManifest, Vec<AssessmentResult>), EvalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let hash = HashEmbedder::new(hash_seed, dimension);
    let embedding_model = hash.model_id().to_string();
    let embedder = Arc::new(RecordingEmbedder::new(hash, dir)?);
    for unit in components.corpus.units() {
        embedder.embed_text(&unit.embedding_text()).await?;
    }

    let script = runs
        .iter()
        .flat_map(|(_, t)| [t.rewrite.clone(), t.answer.clone()]);
    let scripted = ScriptedGenerator::new(TRANSCRIPT_GENERATION_MODEL, script);
    let generator = Arc::new(RecordingGenerator::new(scripted, dir)?);

    let mut results = Vec::with_capacity(runs.len());
    for (scenario, _) in runs {
        let params = BuildParams {
            seed: scenario.seed,
            ..components.build
        };
        let index = build_index(
            &components.corpus,
            embedder.as_ref(),
            &components.retrieval.kinds,
            params,
        )
        .await?;
        let pipeline = Pipeline {
            corpus: components.corpus.clone(),
            index: Arc::new(index),
            embedder: embedder.clone(),
            generator: generator.clone(),
            templates: components.templates.clone(),
            retrieval: components.retrieval.clone(),
            generation: components.generation,
        };
        let result = pipeline
            .assess_with_query(&scenario.input, scenario.query_override.as_deref())
            .await?;
        results.push(result);
    }

    let manifest = FixtureManifest {
        embedding_model,
        generation_model: TRANSCRIPT_GENERATION_MODEL.to_string(),
        dimension,
        hash_seed: Some(hash_seed),
        provenance: provenance.to_string(),
    };
    manifest.save(dir)?;
    Ok((manifest, results))
}

/// Provenance note written into manifests produced from transcripts.
pub const TRANSCRIPT_PROVENANCE: &str = "completions are scripted transcripts replayed through the pipeline; \
embeddings are the seeded hash embedding; not recorded from a live model";

/// Records fixtures for `scenarios`, reading each scenario's transcript from
/// `<transcripts_dir>/<name>.toml`. The hash seed is 0 and the dimension the
/// hash embedding's default.
pub async fn record_from_transcripts(
    components: &EvalComponents,
    scenarios: &[ScenarioConfig],
    transcripts_dir: &Path,
    out_dir: &Path,
) -> Result<(FixtureManifest, Vec<AssessmentResult>), EvalError> {
    let runs = scenarios
        .iter()
        .map(|s| Ok((s.clone(), load_transcript(&transcripts_dir.join(format!("{}.toml", s.name)))?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    record_fixtures(
        components,
        &runs,
        out_dir,
        0,
        crate::backends::DEFAULT_HASH_DIMENSION,
        TRANSCRIPT_PROVENANCE,
    )
    .await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn script_plays_in_order() {
        let g = ScriptedGenerator::new("s", ["one".to_string(), "  ".to_string(), "two\n".to_string()]);
        let req = GenerationRequest::new("p");
        assert_eq!(g.generate(&req).await.unwrap(), "one");
        assert!(matches!(g.generate(&req).await, Err(BackendError::EmptyCompletion)));
        assert_eq!(g.generate(&req).await.unwrap(), "two");
        assert_eq!(g.remaining(), 0);
        assert!(g.generate(&req).await.is_err());
    }
}
