mod common;

use std::collections::BTreeSet;

use axum::http::StatusCode;
use common::*;
use serde_json::{json, Value};
use taiscan_core::prescreen::{rules, GroupId};
use taiscan_core::ragflow::AssessmentResult;
use taiscan_service::audit::AuditRecord;

#[tokio::test]
async fn prescreen_prohibited_blocks_without_token() {
    let env = env(false).await;
    let (app, _) = app(&env.config);
    let (status, body, _) = post(&app, "/api/v1/prescreen", &prohibited_answers()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["risk"], "Prohibited");
    assert_eq!(body["may_proceed"], false);
    assert!(body["gate_token"].is_null());
    let first = ids(GroupId::Prohibited)[0].clone();
    let rule = body["triggered_rules"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["rule"] == rules::PROHIBITED)
        .expect("prohibited rule fired");
    assert_eq!(rule["option_ids"], json!([first]));
    assert!(body["explanation"].as_str().unwrap().contains(&first));
    assert!(body["explanation"].as_str().unwrap().contains("blocked"));
}

#[tokio::test]
async fn prescreen_validation_errors() {
    let env = env(false).await;
    let (app, state) = app(&env.config);
    let (status, body, _) = post(&app, "/api/v1/prescreen", &json!({"prohibited_checked": ["nope"]})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_answers");
    assert_eq!(body["field_errors"][0]["code"], "unknown_option_id");
    assert_eq!(body["field_errors"][0]["field"], "prohibited_checked[0]");

    let (status, _, _) = call(&app, "POST", "/api/v1/prescreen", Some("{not json".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(state.audit.is_empty(), "rejected requests are not audited");
}

#[tokio::test]
async fn sequential_prescreens_get_consecutive_ids() {
    let env = env(false).await;
    let (app, _) = app(&env.config);
    let (_, a, _) = post(&app, "/api/v1/prescreen", &passing_answers()).await;
    let (_, b, _) = post(&app, "/api/v1/prescreen", &prohibited_answers()).await;
    assert_eq!(b["audit_id"].as_u64().unwrap(), a["audit_id"].as_u64().unwrap() + 1);
}

#[tokio::test]
async fn assess_requires_valid_token() {
    let env = env(true).await;
    let (app, state) = app(&env.config);
    let input = scenario_input("02-highrisk-provider.toml");

    let (status, body, _) = post(&app, "/api/v1/assess", &input).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "gate_not_passed");

    for bad in ["", "garbage", "a.b", "eyJ2IjoxfQ.AAAA"] {
        let (status, _, _) = post(&app, "/api/v1/assess", &with_token(input.clone(), bad)).await;
        assert_eq!(status, StatusCode::CONFLICT, "token {bad:?}");
    }

    // A token signed with another key is refused.
    let other = env.config.clone();
    let mut other = other;
    other.gate.secret = Some("other".into());
    other.audit_log = env.dir.path().join("other.jsonl");
    let (other_app, _) = common::app(&other);
    let foreign = gate_token(&other_app).await;
    let (status, _, _) = post(&app, "/api/v1/assess", &with_token(input.clone(), &foreign)).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // Invalid input with a valid token is a 400, and the gate runs first.
    let token = gate_token(&app).await;
    let mut empty = input.clone();
    empty["domain"] = json!("  ");
    let (status, body, _) = post(&app, "/api/v1/assess", &with_token(empty.clone(), &token)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _, _) = post(&app, "/api/v1/assess", &empty).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let mut unknown = with_token(input.clone(), &token);
    unknown["colour"] = json!("red");
    let (status, _, _) = post(&app, "/api/v1/assess", &unknown).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(state.audit.len(), 1, "only the prescreen was audited");
}

#[tokio::test]
async fn gated_assess_reproduces_high_risk_provider_row() {
    let env = env(true).await;
    let (app, state) = app(&env.config);
    let token = gate_token(&app).await;
    let (status, body, _) = post(
        &app,
        "/api/v1/assess",
        &with_token(scenario_input("02-highrisk-provider.toml"), &token),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["risk_level"], "HighRisk");
    let articles: BTreeSet<String> = body["articles"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let expected: BTreeSet<String> = [13, 14, 9, 12, 27, 15, 17, 8, 42].iter().map(|n| format!("article:{n}")).collect();
    assert_eq!(articles, expected);

    // The audit record reconstructs the exact result.
    let id = body["audit_id"].as_u64().unwrap();
    let (status, record) = get(&app, &format!("/api/v1/assessments/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    let record: AuditRecord = serde_json::from_value(record).unwrap();
    let stored: AssessmentResult = serde_json::from_value(record.entry.response.clone()).unwrap();
    let mut returned = body.clone();
    returned.as_object_mut().unwrap().remove("audit_id");
    let returned: AssessmentResult = serde_json::from_value(returned).unwrap();
    assert_eq!(stored, returned);
    assert_eq!(record.entry.prompt_version.as_deref(), Some(stored.prompt_version.as_str()));
    assert_eq!(record.entry.embedding_model.as_deref(), Some("hash-embed/d256/s0"));
    assert_eq!(record.entry.config_digest, state.config_digest);
    assert_eq!(record.entry.request["prescreen_audit_id"], 1);
}

#[tokio::test]
async fn missing_index_degrades_and_disables_assess() {
    let env = env(false).await;
    let (app, _) = app(&env.config);
    let (status, health) = get(&app, "/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "degraded");
    assert_eq!(health["assess_enabled"], false);
    assert_eq!(health["index"]["state"], "missing");

    let token = gate_token(&app).await;
    let (status, _, _) = post(&app, "/api/v1/assess", &with_token(scenario_input("04-lowrisk-provider.toml"), &token)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn health_ok_when_everything_loaded() {
    let env = env(true).await;
    let (app, _) = app(&env.config);
    let (status, health) = get(&app, "/healthz").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(health["status"], "ok", "{health}");
    assert_eq!(health["index"]["state"], "loaded");
    assert_eq!(health["corpus"]["articles"], 113);
}

#[tokio::test]
async fn backend_down_is_502_with_retry_after() {
    let env = env(true).await;
    // Live backends pointing at a closed port; the index was built from the
    // replay embeddings so its dimension must be declared for the check.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let mut config = env.config.clone();
    config.backend.mode = taiscan_core::backends::BackendMode::Live;
    for (b, model) in [(&mut config.backend.embedding, "emb"), (&mut config.backend.generation, "gen")] {
        b.endpoint = endpoint.clone();
        b.model_id = model.into();
        b.max_retries = 0;
        b.timeout_ms = 500;
    }
    config.backend.embedding.dimension = Some(256);
    config.probe_timeout_ms = 300;
    let (app, _) = app(&config);

    let (_, health) = get(&app, "/healthz").await;
    assert_eq!(health["status"], "degraded");
    assert_eq!(health["generation"]["ok"], false);
    assert!(health["generation"]["detail"].is_string());

    let token = gate_token(&app).await;
    let (status, body, headers) =
        post(&app, "/api/v1/assess", &with_token(scenario_input("04-lowrisk-provider.toml"), &token)).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{body}");
    assert_eq!(headers["retry-after"], "5");
}

#[tokio::test]
async fn listing_and_lookup() {
    let env = env(false).await;
    let (app, _) = app(&env.config);
    for _ in 0..3 {
        post(&app, "/api/v1/prescreen", &passing_answers()).await;
    }
    let (status, page) = get(&app, "/api/v1/assessments").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(page["total"], 3);
    let ids: Vec<u64> = page["items"].as_array().unwrap().iter().map(|s| s["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 2, 3]);
    let (_, page) = get(&app, "/api/v1/assessments?offset=1&limit=1").await;
    assert_eq!(page["items"][0]["id"], 2);
    assert_eq!(get(&app, "/api/v1/assessments?limit=0").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/v1/assessments?limit=x").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/v1/assessments/99").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/v1/assessments/abc").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn ids_continue_after_restart() {
    let env = env(false).await;
    {
        let (app, _) = app(&env.config);
        post(&app, "/api/v1/prescreen", &passing_answers()).await;
        post(&app, "/api/v1/prescreen", &passing_answers()).await;
    }
    let (app, _) = app(&env.config);
    let (_, body, _) = post(&app, "/api/v1/prescreen", &passing_answers()).await;
    assert_eq!(body["audit_id"], 3);
}

#[tokio::test]
async fn corpus_units_and_catalog() {
    let env = env(false).await;
    let (app, _) = app(&env.config);
    let (status, unit) = get(&app, "/api/v1/corpus/units/article:14").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(unit["title"], "Human Oversight");
    assert_eq!(get(&app, "/api/v1/corpus/units/annex:III").await.0, StatusCode::OK);
    assert_eq!(get(&app, "/api/v1/corpus/units/article:999").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/v1/corpus/units/chapter:1").await.0, StatusCode::BAD_REQUEST);

    let (status, catalog) = get(&app, "/api/v1/prescreen/catalog").await;
    assert_eq!(status, StatusCode::OK);
    assert!(catalog["groups"].as_array().unwrap().len() >= 5);
    let _: Value = catalog;
}
