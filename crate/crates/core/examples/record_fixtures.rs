//! Regenerates `data/replay` from `data/scenarios` and `data/transcripts`.
//!
//! cargo run -p taiscan-core --example record_fixtures

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::DateTime;
use taiscan_core::corpus::{parse_document, CorpusMeta};
use taiscan_core::evalharness::{load_scenarios, record_from_transcripts, EvalComponents};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let raw = std::fs::read_to_string(data.join("ai_act.txt"))?;
    let corpus = parse_document(&raw, CorpusMeta::new("ai_act.txt", "fixture", DateTime::UNIX_EPOCH))?;
    let components = EvalComponents::new(Arc::new(corpus));
    let scenarios = load_scenarios(&data.join("scenarios"))?;

    let out = data.join("replay");
    clear_fixtures(&out)?;
    let (manifest, results) =
        record_from_transcripts(&components, &scenarios, &data.join("transcripts"), &out).await?;
    println!("recorded into {} ({} / {})", out.display(), manifest.embedding_model, manifest.generation_model);
    for (s, r) in scenarios.iter().zip(&results) {
        let retrieved: Vec<String> = r.retrieved_context.iter().map(|u| u.unit_ref.to_string()).collect();
        println!("{}: {} {:?}", s.name, r.risk_level, retrieved);
    }
    Ok(())
}

fn clear_fixtures(dir: &Path) -> std::io::Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        if matches!(ext, Some("vec" | "txt")) || path.file_name().is_some_and(|n| n == "manifest.toml") {
            std::fs::remove_file(path)?;
        }
    }
    Ok(())
}
