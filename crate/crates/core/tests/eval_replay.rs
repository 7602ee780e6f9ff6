use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::DateTime;
use taiscan_core::backends::BackendMode;
use taiscan_core::corpus::{parse_document, CorpusMeta, UnitRef};
use taiscan_core::evalharness::{
    emit_report, load_scenarios, parse_records, record_from_transcripts, render_records,
    render_table, run_scenarios, EvalComponents, ScenarioConfig,
};
use taiscan_core::ragflow::RiskLevel;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn components() -> EvalComponents {
    let raw = std::fs::read_to_string(data_dir().join("ai_act.txt")).unwrap();
    let corpus = parse_document(&raw, CorpusMeta::new("ai_act.txt", "fixture", DateTime::UNIX_EPOCH)).unwrap();
    EvalComponents::new(Arc::new(corpus))
}

fn scenarios() -> Vec<ScenarioConfig> {
    load_scenarios(&data_dir().join("scenarios")).unwrap()
}

const TABLE: [(&str, RiskLevel, &[u32]); 4] = [
    ("prohibited-provider", RiskLevel::Prohibited, &[14, 13, 26, 12, 49, 16, 9, 6, 5, 27]),
    ("highrisk-provider", RiskLevel::HighRisk, &[13, 14, 9, 12, 27, 15, 17, 8, 42]),
    ("highrisk-deployer", RiskLevel::HighRisk, &[13, 14, 9, 12, 27, 16, 26, 15, 8, 49]),
    ("lowrisk-provider", RiskLevel::LowRisk, &[13, 14, 9, 15, 16, 8, 6, 42, 12, 10]),
];

#[tokio::test]
async fn replay_reproduces_reference_table() {
    let out = tempfile::tempdir().unwrap();
    let configs = scenarios();
    assert_eq!(configs.len(), 4);
    let started = Instant::now();
    let report = run_scenarios(&configs, &components(), out.path()).await;
    assert!(started.elapsed().as_secs_f64() < 5.0);

    assert_eq!(report.accuracy, Some(1.0));
    assert_eq!(report.mean_jaccard, Some(1.0));
    assert!(report.gate_bypassed);
    assert!(report.generated_at.is_none());
    report.check_consistency().unwrap();
    for (outcome, (name, level, articles)) in report.scenarios.iter().zip(TABLE) {
        assert_eq!(outcome.name, name);
        assert!(outcome.error.is_none(), "{name}: {:?}", outcome.error);
        assert_eq!(outcome.predicted_risk, Some(level));
        let expected: BTreeSet<u32> = articles.iter().copied().collect();
        assert_eq!(outcome.predicted_set(), expected, "{name}");
        assert!(outcome.horizontal_coverage);
        assert!(out.path().join("raw").join(format!("{name}.result.json")).exists());
    }

    let (table, records) = emit_report(&report, out.path()).unwrap();
    let text = std::fs::read_to_string(table).unwrap();
    assert!(text.starts_with("Risk-Level"));
    assert!(text.contains("Real-time remote biometric identification"));
    assert!(text.contains("High-Risk (Deployer)"));
    assert_eq!(parse_records(&std::fs::read_to_string(records).unwrap()).unwrap(), report);
}

#[tokio::test]
async fn replay_runs_are_identical() {
    let configs = scenarios();
    let c = components();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_scenarios(&configs, &c, a.path()).await;
    let second = run_scenarios(&configs, &c, b.path()).await;
    assert_eq!(render_records(&first), render_records(&second));
    assert_eq!(render_table(&first), render_table(&second));
    for (name, _, _) in TABLE {
        let file = format!("raw/{name}.result.json");
        assert_eq!(
            std::fs::read(a.path().join(&file)).unwrap(),
            std::fs::read(b.path().join(&file)).unwrap()
        );
    }
}

#[tokio::test]
async fn prohibited_scenario_retrieves_article_5() {
    let out = tempfile::tempdir().unwrap();
    let configs: Vec<ScenarioConfig> = scenarios().into_iter().take(1).collect();
    run_scenarios(&configs, &components(), out.path()).await;
    let raw = std::fs::read_to_string(out.path().join("raw/prohibited-provider.result.json")).unwrap();
    let result: taiscan_core::ragflow::AssessmentResult = serde_json::from_str(&raw).unwrap();
    assert_eq!(result.retrieved_context.len(), 10);
    assert!(result.retrieved_context.iter().any(|u| u.unit_ref == UnitRef::article(5)));
    assert!(!result.rewrite_fallback);
}

#[tokio::test]
async fn deterministic_mode_matches_replay() {
    let out = tempfile::tempdir().unwrap();
    let configs: Vec<ScenarioConfig> = scenarios()
        .into_iter()
        .map(|mut s| {
            s.backend = BackendMode::Deterministic;
            s
        })
        .collect();
    let report = run_scenarios(&configs, &components(), out.path()).await;
    assert_eq!(report.accuracy, Some(1.0));
    assert_eq!(report.mean_jaccard, Some(1.0));
}

#[tokio::test]
async fn failures_are_recorded_not_raised() {
    let out = tempfile::tempdir().unwrap();
    let mut configs = scenarios();
    configs[1].fixtures = Some(out.path().join("missing"));
    configs[2].backend = BackendMode::Live;
    let report = run_scenarios(&configs, &components(), out.path()).await;
    assert_eq!(report.scenarios.len(), 4);
    assert!(report.scenarios[1].error.is_some());
    assert!(report.scenarios[2].error.is_some());
    assert!(report.scenarios[0].error.is_none());
    assert!(report.scenarios[3].error.is_none());
    report.check_consistency().unwrap();
    assert!(render_table(&report).contains("error"));
}

#[tokio::test]
async fn empty_run_has_undefined_accuracy() {
    let out = tempfile::tempdir().unwrap();
    let report = run_scenarios(&[], &components(), out.path()).await;
    assert!(report.scenarios.is_empty());
    assert_eq!(report.accuracy, None);
    assert!(render_table(&report).contains("accuracy: n/a"));
}

fn fixture_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[tokio::test]
async fn bundled_fixtures_regenerate_byte_for_byte() {
    let out = tempfile::tempdir().unwrap();
    record_from_transcripts(&components(), &scenarios(), &data_dir().join("transcripts"), out.path())
        .await
        .unwrap();
    let fresh = fixture_files(out.path());
    let bundled = fixture_files(&data_dir().join("replay"));
    assert_eq!(fresh.len(), bundled.len());
    for (f, b) in fresh.iter().zip(&bundled) {
        assert_eq!(f.0, b.0);
        assert!(f.1 == b.1, "{} differs", f.0);
    }
}
