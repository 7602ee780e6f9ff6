use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    classify_reference_groups, parse_assessment, AssessmentInput, AssessmentResult,
    PromptTemplate, RagError,
};
use crate::annindex::{default_search_budget, AnnIndex, BuildParams, IndexItem};
use crate::backends::{
    BackendConfig, BackendError, EmbeddingBackend, GenerationBackend, GenerationRequest,
};
use crate::corpus::{normalize_line, Corpus, DocUnit, UnitKind, UnitRef};

/// Retrieved units per assessment.
pub const DEFAULT_K: usize = 10;

const EMBED_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSettings {
    pub k: usize,
    /// Unit kinds eligible for retrieval; the index may hold more.
    pub kinds: Vec<UnitKind>,
    /// Candidate budget; `None` means `max(4k, 64)`.
    pub search_budget: Option<usize>,
    /// Per-unit cap on body characters placed in the answer prompt.
    pub context_chars: usize,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            kinds: vec![UnitKind::Article],
            search_budget: None,
            context_chars: 2000,
        }
    }
}

impl RetrievalSettings {
    pub fn budget(&self) -> usize {
        self.search_budget
            .unwrap_or_else(|| default_search_budget(self.k))
            .max(self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            seed: Some(0),
            max_tokens: GenerationRequest::DEFAULT_MAX_TOKENS,
        }
    }
}

impl From<&BackendConfig> for GenerationParams {
    fn from(config: &BackendConfig) -> Self {
        Self {
            temperature: config.temperature,
            seed: config.request_seed,
            max_tokens: config.max_tokens,
        }
    }
}

impl GenerationParams {
    fn request(&self, prompt: String) -> GenerationRequest {
        GenerationRequest {
            prompt,
            temperature: self.temperature,
            seed: self.seed,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedUnit {
    #[serde(rename = "ref")]
    pub unit_ref: UnitRef,
    pub title: Option<String>,
    /// Cosine similarity to the query embedding.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub text: String,
    pub prompt: String,
    pub fallback: bool,
}

/// Canonical query text: the five fields with fixed labels, in form order.
pub fn compose_query(input: &AssessmentInput) -> String {
    format!(
        "Role: {}\nDomain of application: {}\nType of AI system: {}\nType of input data: {}\nIntended use: {}",
        input.role,
        normalize_line(&input.domain),
        normalize_line(&input.system_type),
        normalize_line(&input.input_data),
        normalize_line(&input.intended_use),
    )
}

fn template_values(input: &AssessmentInput, query: &str) -> BTreeMap<&'static str, String> {
    let mut values = BTreeMap::new();
    values.insert("role", input.role.to_string());
    for (name, value) in input.text_fields() {
        values.insert(name, normalize_line(value));
    }
    values.insert("query", query.to_string());
    values
}

/// Expands the query through the rewrite template. An empty completion falls
/// back to the original query with `fallback` set; transport errors
/// propagate.
pub async fn rewrite_query(
    query: &str,
    input: &AssessmentInput,
    generator: &dyn GenerationBackend,
    template: &PromptTemplate,
    params: &GenerationParams,
) -> Result<Rewrite, RagError> {
    if query.trim().is_empty() {
        return Err(RagError::InvalidInput("query is empty".into()));
    }
    let prompt = template.rewrite.render(&template_values(input, query))?;
    match generator.generate(&params.request(prompt.clone())).await {
        Ok(text) => Ok(Rewrite {
            text: text.trim().to_string(),
            prompt,
            fallback: false,
        }),
        Err(BackendError::EmptyCompletion) => {
            tracing::warn!("query rewrite returned nothing; using the composed query");
            Ok(Rewrite {
                text: query.to_string(),
                prompt,
                fallback: true,
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Embeds `query_text` and returns up to `k` units of the allowed kinds,
/// most similar first.
pub async fn retrieve(
    query_text: &str,
    index: &AnnIndex,
    corpus: &Corpus,
    embedder: &dyn EmbeddingBackend,
    settings: &RetrievalSettings,
) -> Result<Vec<RetrievedUnit>, RagError> {
    if settings.k == 0 {
        return Err(RagError::InvalidInput("k must be at least 1".into()));
    }
    let q = embedder.embed_text(query_text).await?;
    let hits = index.query_filtered(&q, settings.k, settings.budget(), |item| {
        settings.kinds.contains(&item.unit_ref.kind())
    })?;
    hits.into_iter()
        .map(|hit| {
            let item = index
                .item(hit.item_id)
                .expect("query only returns indexed items");
            let unit = corpus
                .get_unit(&item.unit_ref)
                .map_err(|_| RagError::UnknownRef(item.unit_ref.clone()))?;
            Ok(RetrievedUnit {
                unit_ref: unit.unit_ref.clone(),
                title: unit.title.clone(),
                score: hit.similarity(),
            })
        })
        .collect()
}

fn truncate_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((cut, _)) => format!("{} [...]", text[..cut].trim_end()),
        None => text.to_string(),
    }
}

/// Context section of the answer prompt.
pub fn render_context(units: &[&DocUnit], max_chars: usize) -> String {
    units
        .iter()
        .map(|u| {
            format!(
                "[{}] {}\n{}",
                u.unit_ref,
                u.display_title(),
                truncate_chars(&u.body, max_chars)
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Embeds every unit of the selected kinds and builds the forest. Item ids
/// are corpus positions.
pub async fn build_index(
    corpus: &Corpus,
    embedder: &dyn EmbeddingBackend,
    kinds: &[UnitKind],
    params: BuildParams,
) -> Result<AnnIndex, RagError> {
    let selected: Vec<(usize, &DocUnit)> = corpus
        .units()
        .iter()
        .enumerate()
        .filter(|(_, u)| kinds.contains(&u.kind()))
        .collect();
    if selected.is_empty() {
        return Err(RagError::InvalidInput("no corpus units of the selected kinds".into()));
    }
    let mut items = Vec::with_capacity(selected.len());
    for chunk in selected.chunks(EMBED_CHUNK) {
        let texts: Vec<String> = chunk.iter().map(|(_, u)| u.embedding_text()).collect();
        let vectors = embedder.embed_batch(&texts).await?;
        for ((pos, unit), vector) in chunk.iter().zip(vectors) {
            items.push(IndexItem {
                item_id: *pos as u64,
                unit_ref: unit.unit_ref.clone(),
                vector,
            });
        }
    }
    Ok(AnnIndex::build(items, params)?)
}

/// Everything an assessment needs, shared read-only between requests.
#[derive(Clone)]
pub struct Pipeline {
    pub corpus: Arc<Corpus>,
    pub index: Arc<AnnIndex>,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub generator: Arc<dyn GenerationBackend>,
    pub templates: Arc<PromptTemplate>,
    pub retrieval: RetrievalSettings,
    pub generation: GenerationParams,
}

impl Pipeline {
    pub fn embedding_model(&self) -> &str {
        self.embedder.model_id()
    }

    pub fn generation_model(&self) -> &str {
        self.generator.model_id()
    }

    pub async fn assess(&self, input: &AssessmentInput) -> Result<AssessmentResult, RagError> {
        self.assess_with_query(input, None).await
    }

    /// Runs the whole pipeline. `query_override` replaces the composed query
    /// (before rewriting).
    pub async fn assess_with_query(
        &self,
        input: &AssessmentInput,
        query_override: Option<&str>,
    ) -> Result<AssessmentResult, RagError> {
        input.validate()?;
        let query = match query_override {
            Some(q) if !q.trim().is_empty() => q.trim().to_string(),
            _ => compose_query(input),
        };
        let rewrite = rewrite_query(
            &query,
            input,
            self.generator.as_ref(),
            &self.templates,
            &self.generation,
        )
        .await?;
        let retrieved = retrieve(
            &rewrite.text,
            &self.index,
            &self.corpus,
            self.embedder.as_ref(),
            &self.retrieval,
        )
        .await?;

        let units: Vec<&DocUnit> = retrieved
            .iter()
            .map(|r| self.corpus.get_unit(&r.unit_ref).expect("resolved during retrieval"))
            .collect();
        let mut values = template_values(input, &query);
        values.insert("rewritten_query", rewrite.text.clone());
        values.insert("context", render_context(&units, self.retrieval.context_chars));
        let prompt = self.templates.answer.render(&values)?;

        let raw = match self.generator.generate(&self.generation.request(prompt)).await {
            Ok(raw) => raw,
            Err(BackendError::EmptyCompletion) => {
                return Err(RagError::MalformedOutput("empty completion".into()))
            }
            Err(e) => return Err(e.into()),
        };
        let parsed = parse_assessment(&raw, &self.corpus)?;
        let article_groups = classify_reference_groups(&parsed.articles);

        Ok(AssessmentResult {
            risk_level: parsed.risk_level,
            articles: parsed.articles,
            recitals: parsed.recitals,
            annexes: parsed.annexes,
            article_groups,
            retrieved_context: retrieved,
            query,
            rewritten_query: rewrite.text,
            rewrite_fallback: rewrite.fallback,
            raw_generation: raw,
            prompt_version: self.templates.version().to_string(),
            warnings: parsed.warnings,
        })
    }
}
