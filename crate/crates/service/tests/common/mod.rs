#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use taiscan_core::annindex::{self, BuildParams};
use taiscan_core::backends::BackendSet;
use taiscan_core::prescreen::{Catalog, GroupId};
use taiscan_core::ragflow::{build_index, RetrievalSettings};
use taiscan_service::state::load_corpus_file;
use taiscan_service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub struct TestEnv {
    pub dir: tempfile::TempDir,
    pub config: ServiceConfig,
}

/// Replay-backed service configuration over the bundled fixture corpus; the
/// index is built from the recorded embeddings when `with_index`.
pub async fn env(with_index: bool) -> TestEnv {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "corpus = {:?}\nindex = \"index.taix\"\naudit_log = \"audit.jsonl\"\n\
         [backend]\nmode = \"replay\"\nfixtures = {:?}\n[gate]\nsecret = \"test-secret\"\n",
        data_dir().join("ai_act.txt"),
        data_dir().join("replay"),
    );
    let config = ServiceConfig::from_toml_with_overrides(&text, dir.path(), &BTreeMap::new()).unwrap();
    if with_index {
        let corpus = load_corpus_file(&config.corpus).unwrap();
        let backends = BackendSet::replay(config.backend.fixtures.as_ref().unwrap()).unwrap();
        let index = build_index(
            &corpus,
            backends.embedder.as_ref(),
            &RetrievalSettings::default().kinds,
            BuildParams::default(),
        )
        .await
        .unwrap();
        annindex::save(&index, &config.index).unwrap();
    }
    TestEnv { dir, config }
}

pub fn app(config: &ServiceConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::from_config(config).unwrap());
    (router(Arc::clone(&state)), state)
}

pub async fn call(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value, headers)
}

pub async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value, axum::http::HeaderMap) {
    call(app, "POST", uri, Some(body.to_string())).await
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, v, _) = call(app, "GET", uri, None).await;
    (s, v)
}

pub fn ids(group: GroupId) -> Vec<String> {
    Catalog::bundled().group(group).options.iter().map(|o| o.id.clone()).collect()
}

/// All AI criteria checked, nothing else: proceeds.
pub fn passing_answers() -> Value {
    json!({ "ai_criteria_checked": ids(GroupId::AiCriteria) })
}

pub fn prohibited_answers() -> Value {
    json!({
        "ai_criteria_checked": ids(GroupId::AiCriteria),
        "prohibited_checked": [ids(GroupId::Prohibited)[0].clone()],
    })
}

/// Assessment input of a bundled scenario, by file name.
pub fn scenario_input(file: &str) -> Value {
    let text = std::fs::read_to_string(data_dir().join("scenarios").join(file)).unwrap();
    let table: toml::Table = text.parse().unwrap();
    serde_json::to_value(&table["input"]).unwrap()
}

pub async fn gate_token(app: &Router) -> String {
    let (status, body, _) = post(app, "/api/v1/prescreen", &passing_answers()).await;
    assert_eq!(status, StatusCode::OK);
    body["gate_token"].as_str().unwrap().to_string()
}

pub fn with_token(mut input: Value, token: &str) -> Value {
    input["gate_token"] = Value::String(token.to_string());
    input
}
