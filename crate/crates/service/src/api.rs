//! HTTP routes and handlers.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use taiscan_core::backends::BackendError;
use taiscan_core::corpus::{KindCounts, UnitRef};
use taiscan_core::prescreen::{evaluate, validate_answers, FieldError, PrescreenError, PrescreenOutcome};
use taiscan_core::ragflow::{AssessmentInput, AssessmentResult, RagError};

use crate::audit::{AuditEntry, AuditKind, AuditRecord, AuditSummary};
use crate::gate::GateError;
use crate::state::{AppState, IndexState};

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;
/// Seconds a client should wait after a backend outage before retrying.
pub const RETRY_AFTER_SECS: u64 = 5;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/api/v1/prescreen", post(prescreen))
        .route("/api/v1/prescreen/catalog", get(catalog))
        .route("/api/v1/assess", post(assess))
        .route("/api/v1/assessments", get(list_assessments))
        .route("/api/v1/assessments/{id}", get(get_assessment))
        .route("/api/v1/corpus/units/{unit_ref}", get(corpus_unit))
        .with_state(state)
}

/// JSON error body; `code` is stable, `message` is for humans.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub field_errors: Vec<FieldError>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
    retry_after: Option<u64>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                field_errors: Vec::new(),
            },
            retry_after: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn audit(e: crate::audit::AuditError) -> Self {
        tracing::error!(error = %e, "audit append failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "audit_failure", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut response = (self.status, Json(self.body)).into_response();
        if let Some(secs) = self.retry_after {
            response
                .headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        response
    }
}

impl From<GateError> for ApiError {
    fn from(e: GateError) -> Self {
        Self::new(StatusCode::CONFLICT, "gate_not_passed", e.to_string())
    }
}

impl From<RagError> for ApiError {
    fn from(e: RagError) -> Self {
        let message = e.to_string();
        match e {
            RagError::InvalidInput(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_input", message),
            RagError::MalformedOutput(_) | RagError::UnknownRiskLevel(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_output", message)
            }
            RagError::Backend(b) => {
                let mut err = Self::new(StatusCode::BAD_GATEWAY, "backend_unavailable", message);
                if matches!(b, BackendError::Unavailable { .. }) {
                    err.retry_after = Some(RETRY_AFTER_SECS);
                }
                err
            }
            RagError::Index(_) | RagError::UnknownRef(_) | RagError::Template(_) => {
                tracing::error!(error = %message, "assessment failed internally");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

fn parse_json(body: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("body is not valid JSON: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrescreenResponse {
    #[serde(flatten)]
    pub outcome: PrescreenOutcome,
    pub explanation: String,
    pub audit_id: u64,
    /// Present only when the outcome allows the assessment.
    pub gate_token: Option<String>,
    pub expires_at: Option<DateTime<Utc>>,
}

async fn prescreen(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<PrescreenResponse>, ApiError> {
    let raw = parse_json(&body)?;
    let answers = validate_answers(&state.catalog, &raw).map_err(|e| match e {
        PrescreenError::InvalidAnswers(field_errors) => {
            let mut err = ApiError::bad_request("answers failed validation");
            err.body.code = "invalid_answers".into();
            err.body.field_errors = field_errors;
            err
        }
        other => ApiError::bad_request(other.to_string()),
    })?;
    let outcome = evaluate(&state.catalog, &answers);
    let record = state
        .audit
        .append(AuditEntry {
            kind: AuditKind::Prescreen,
            request: serde_json::to_value(&answers).expect("answers serialize"),
            response: serde_json::to_value(&outcome).expect("outcome serializes"),
            prompt_version: None,
            embedding_model: None,
            generation_model: None,
            config_digest: state.config_digest.clone(),
        })
        .await
        .map_err(ApiError::audit)?;
    let (gate_token, expires_at) = if outcome.may_proceed {
        let (token, exp) = state.gate.issue(&outcome, record.id, Utc::now());
        (Some(token), Some(exp))
    } else {
        (None, None)
    };
    tracing::info!(audit_id = record.id, risk = ?outcome.risk, may_proceed = outcome.may_proceed, "prescreen");
    Ok(Json(PrescreenResponse {
        explanation: outcome.explain(),
        outcome,
        audit_id: record.id,
        gate_token,
        expires_at,
    }))
}

async fn catalog(State(state): State<Arc<AppState>>) -> Response {
    Json(state.catalog.as_ref()).into_response()
}

/// Body of `POST /api/v1/assess`: the five form fields plus the gate token.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessRequest {
    #[serde(flatten)]
    pub input: AssessmentInput,
    pub gate_token: Option<String>,
    #[serde(default)]
    pub query_override: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssessResponse {
    pub audit_id: u64,
    #[serde(flatten)]
    pub result: AssessmentResult,
}

/// What the audit log keeps as the request of an assessment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessAuditRequest {
    pub input: AssessmentInput,
    pub query_override: Option<String>,
    /// Audit id of the pre-screen that issued the token.
    pub prescreen_audit_id: u64,
}

async fn assess(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<AssessResponse>, ApiError> {
    let mut raw = parse_json(&body)?;
    let object = raw
        .as_object_mut()
        .ok_or_else(|| ApiError::bad_request("body must be a JSON object"))?;
    let token = match object.remove("gate_token") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(GateError::Malformed.into()),
    };
    let claims = state.gate.verify(token.as_deref(), Utc::now())?;

    let query_override = match object.remove("query_override") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(ApiError::bad_request("query_override must be a string")),
    };
    let input: AssessmentInput = serde_json::from_value(raw)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_input", e.to_string()))?;
    input.validate()?;

    let pipeline = state.pipeline.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "assessment_disabled",
            "the vector index is not loaded; see /healthz",
        )
    })?;
    let result = pipeline.assess_with_query(&input, query_override.as_deref()).await?;
    let record = state
        .audit
        .append(AuditEntry {
            kind: AuditKind::Assess,
            request: serde_json::to_value(AssessAuditRequest {
                input,
                query_override,
                prescreen_audit_id: claims.audit_id,
            })
            .expect("request serializes"),
            response: serde_json::to_value(&result).expect("result serializes"),
            prompt_version: Some(result.prompt_version.clone()),
            embedding_model: Some(pipeline.embedding_model().to_string()),
            generation_model: Some(pipeline.generation_model().to_string()),
            config_digest: state.config_digest.clone(),
        })
        .await
        .map_err(ApiError::audit)?;
    tracing::info!(audit_id = record.id, risk = %result.risk_level, articles = result.articles.len(), "assess");
    Ok(Json(AssessResponse {
        audit_id: record.id,
        result,
    }))
}

#[derive(Debug, Deserialize)]
struct PageParams {
    offset: Option<usize>,
    limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<AuditSummary>,
}

async fn list_assessments(
    State(state): State<Arc<AppState>>,
    params: Result<Query<PageParams>, QueryRejection>,
) -> Result<Json<AuditPage>, ApiError> {
    let Query(params) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let offset = params.offset.unwrap_or(0);
    let limit = params.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::bad_request(format!("limit must be between 1 and {MAX_PAGE}")));
    }
    Ok(Json(AuditPage {
        total: state.audit.len(),
        offset,
        limit,
        items: state.audit.list(offset, limit),
    }))
}

async fn get_assessment(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<AuditRecord>, ApiError> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::bad_request(format!("record id `{id}` is not a number")))?;
    match state.audit.get(id).await {
        Ok(Some(record)) => Ok(Json(record)),
        Ok(None) => Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no audit record {id}"))),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "audit_failure", e.to_string())),
    }
}

async fn corpus_unit(State(state): State<Arc<AppState>>, Path(raw): Path<String>) -> Result<Response, ApiError> {
    let unit_ref: UnitRef = raw
        .parse()
        .map_err(|e: taiscan_core::corpus::CorpusError| ApiError::bad_request(e.to_string()))?;
    let unit = state
        .corpus
        .get_unit(&unit_ref)
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()))?;
    Ok(Json(unit).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentHealth {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HealthReport {
    /// "ok" or "degraded".
    pub status: &'static str,
    pub assess_enabled: bool,
    pub corpus: KindCounts,
    pub index: IndexState,
    pub backend_mode: String,
    pub embedding: ComponentHealth,
    pub generation: ComponentHealth,
    pub audit_records: usize,
    pub prompt_version: String,
}

async fn probe_component<F>(model: &str, timeout: std::time::Duration, probe: F) -> ComponentHealth
where
    F: std::future::Future<Output = Result<(), BackendError>>,
{
    let (ok, detail) = match tokio::time::timeout(timeout, probe).await {
        Ok(Ok(())) => (true, None),
        Ok(Err(e)) => (false, Some(e.to_string())),
        Err(_) => (false, Some(format!("probe timed out after {} ms", timeout.as_millis()))),
    };
    ComponentHealth {
        ok,
        model: Some(model.to_string()),
        detail,
    }
}

/// Always HTTP 200; degradation is reported in the body.
async fn health(State(state): State<Arc<AppState>>) -> Json<HealthReport> {
    let b = &state.backends;
    let (embedding, generation) = tokio::join!(
        probe_component(b.embedder.model_id(), state.probe_timeout, b.embedder.probe()),
        probe_component(b.generator.model_id(), state.probe_timeout, b.generator.probe()),
    );
    let assess_enabled = state.pipeline.is_some();
    let ok = assess_enabled && embedding.ok && generation.ok;
    Json(HealthReport {
        status: if ok { "ok" } else { "degraded" },
        assess_enabled,
        corpus: state.corpus.counts(),
        index: state.index_state.clone(),
        backend_mode: b.mode.to_string(),
        embedding,
        generation,
        audit_records: state.audit.len(),
        prompt_version: state.templates.version().to_string(),
    })
}
