use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    #[default]
    Ollama,
    /// HuggingFace serving exposed through the same HTTP contract.
    HuggingFace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub provider: Provider,
    pub endpoint: String,
    pub model_id: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub request_seed: Option<u64>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Expected embedding length; responses of another length are rejected.
    pub dimension: Option<usize>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            provider: Provider::Ollama,
            endpoint: "http://127.0.0.1:11434".into(),
            model_id: String::new(),
            timeout_ms: 60_000,
            max_retries: 2,
            request_seed: Some(0),
            temperature: 0.0,
            max_tokens: 1024,
            dimension: None,
        }
    }
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        reqwest::Url::parse(&self.endpoint)
            .map_err(|e| BackendError::InvalidRequest(format!("endpoint `{}`: {e}", self.endpoint)))?;
        if self.model_id.trim().is_empty() {
            return Err(BackendError::InvalidRequest("model_id is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidRequest("timeout must be positive".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(BackendError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.dimension == Some(0) {
            return Err(BackendError::InvalidRequest("dimension must be positive".into()));
        }
        Ok(())
    }
}
