use std::time::Duration;

use async_trait::async_trait;
use reqwest::{Client, StatusCode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{
    check_text, finish_completion, BackendConfig, BackendError, EmbeddingBackend, EmbeddingVector,
    GenerationBackend, GenerationRequest,
};

const BACKOFF_BASE: Duration = Duration::from_millis(50);
const BACKOFF_CAP: Duration = Duration::from_secs(2);

/// Client for an Ollama-compatible server (`/api/embed`, `/api/generate`).
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: BackendConfig,
    client: Client,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    stream: bool,
    options: GenerateOptions,
}

#[derive(Serialize)]
struct GenerateOptions {
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    num_predict: u32,
}

#[derive(Deserialize)]
struct GenerateResponse {
    response: String,
}

enum Attempt<T> {
    Done(T),
    Retry(String),
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let client = Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| BackendError::InvalidRequest(format!("http client: {e}")))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx responses.
    /// Exactly `max_retries + 1` attempts are made before giving up.
    async fn post_json<B: Serialize + Sync, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, BackendError> {
        let url = self.url(path);
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.try_post(&url, body).await? {
                Attempt::Done(value) => return Ok(value),
                Attempt::Retry(reason) => {
                    warn!(%url, attempt, attempts, %reason, "backend request failed");
                    last = reason;
                }
            }
            if attempt < attempts {
                let backoff = BACKOFF_BASE
                    .saturating_mul(1 << (attempt - 1).min(16))
                    .min(BACKOFF_CAP);
                tokio::time::sleep(backoff).await;
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last,
        })
    }

    async fn try_post<B: Serialize + Sync, R: DeserializeOwned>(
        &self,
        url: &str,
        body: &B,
    ) -> Result<Attempt<R>, BackendError> {
        let response = match self.client.post(url).json(body).send().await {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        let status = response.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Ok(Attempt::Retry(format!("HTTP {status}")));
        }
        let bytes = match response.bytes().await {
            Ok(b) => b,
            Err(e) => return Ok(Attempt::Retry(e.to_string())),
        };
        if !status.is_success() {
            return Err(BackendError::Rejected {
                status: status.as_u16(),
                message: String::from_utf8_lossy(&bytes).chars().take(500).collect(),
            });
        }
        serde_json::from_slice(&bytes)
            .map(Attempt::Done)
            .map_err(|e| BackendError::MalformedResponse(e.to_string()))
    }

    fn check_dimension(&self, v: Vec<f32>) -> Result<EmbeddingVector, BackendError> {
        if let Some(expected) = self.config.dimension {
            if v.len() != expected {
                return Err(BackendError::DimensionMismatch {
                    expected,
                    got: v.len(),
                });
            }
        }
        EmbeddingVector::new(v)?.normalize()
    }
}

#[async_trait]
impl EmbeddingBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn dimension(&self) -> Option<usize> {
        self.config.dimension
    }

    async fn embed_text(&self, text: &str) -> Result<EmbeddingVector, BackendError> {
        let mut out = self.embed_batch(&[text.to_string()]).await?;
        Ok(out.remove(0))
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        if texts.is_empty() {
            return Err(BackendError::InvalidRequest("embedding batch is empty".into()));
        }
        for t in texts {
            check_text(t)?;
        }
        let request = EmbedRequest {
            model: &self.config.model_id,
            input: texts,
        };
        let response: EmbedResponse = self.post_json("api/embed", &request).await?;
        if response.embeddings.len() != texts.len() {
            return Err(BackendError::MalformedResponse(format!(
                "{} embeddings returned for {} inputs",
                response.embeddings.len(),
                texts.len()
            )));
        }
        let mut dim = None;
        response
            .embeddings
            .into_iter()
            .map(|v| {
                let expected = *dim.get_or_insert(v.len());
                if v.len() != expected {
                    return Err(BackendError::DimensionMismatch {
                        expected,
                        got: v.len(),
                    });
                }
                self.check_dimension(v)
            })
            .collect()
    }

    async fn probe(&self) -> Result<(), BackendError> {
        probe(&self.client, &self.url("api/version")).await
    }
}

#[async_trait]
impl GenerationBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    async fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        request.validate()?;
        let body = GenerateRequest {
            model: &self.config.model_id,
            prompt: &request.prompt,
            stream: false,
            options: GenerateOptions {
                temperature: request.temperature,
                seed: request.seed,
                num_predict: request.max_tokens,
            },
        };
        let response: GenerateResponse = self.post_json("api/generate", &body).await?;
        debug!(chars = response.response.len(), "completion received");
        finish_completion(response.response)
    }

    async fn probe(&self) -> Result<(), BackendError> {
        probe(&self.client, &self.url("api/version")).await
    }
}

/// Any HTTP response counts as reachable.
async fn probe(client: &Client, url: &str) -> Result<(), BackendError> {
    client
        .get(url)
        .timeout(Duration::from_secs(2))
        .send()
        .await
        .map(|_| ())
        .map_err(|e| BackendError::Unavailable {
            attempts: 1,
            message: e.to_string(),
        })
}
