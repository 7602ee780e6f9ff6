//! Service configuration: a TOML file plus `TAISCAN_` environment
//! overrides.
//!
//! An override variable names a key path with `__` between levels, e.g.
//! `TAISCAN_BIND=0.0.0.0:8080` or `TAISCAN_BACKEND__MODE=replay`. Values
//! are read as TOML literals when they parse as one and as strings
//! otherwise. `TAISCAN_LIVE_*` variables belong to the live diagnostic and
//! are ignored here. Relative paths are resolved against the config file's
//! directory.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taiscan_core::backends::{BackendConfig, BackendMode};
use taiscan_core::ragflow::{GenerationParams, RetrievalSettings};

use crate::ServiceError;

pub const ENV_PREFIX: &str = "TAISCAN_";
/// Variables of the live-backend diagnostic; never read as overrides.
pub const LIVE_DIAGNOSTIC_PREFIX: &str = "TAISCAN_LIVE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub mode: BackendMode,
    /// Fixture directory for replay and deterministic modes.
    pub fixtures: Option<PathBuf>,
    /// Hash embedding seed in deterministic mode.
    pub seed: u64,
    pub embedding: BackendConfig,
    pub generation: BackendConfig,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            mode: BackendMode::Live,
            fixtures: None,
            seed: 0,
            embedding: BackendConfig::default(),
            generation: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateSection {
    /// HMAC key for gate tokens; a random per-process key when unset, which
    /// invalidates outstanding tokens on restart.
    pub secret: Option<String>,
    pub ttl_secs: u64,
}

impl Default for GateSection {
    fn default() -> Self {
        Self {
            secret: None,
            ttl_secs: 900,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// `.units` file, or raw regulation text to parse at startup.
    pub corpus: PathBuf,
    /// Saved ANN index; when missing the service runs degraded.
    pub index: PathBuf,
    /// Directory with `rewrite.tmpl` and `answer.tmpl`; bundled when unset.
    pub templates: Option<PathBuf>,
    /// Option catalog; bundled when unset.
    pub catalog: Option<PathBuf>,
    pub audit_log: PathBuf,
    pub backend: BackendSection,
    pub retrieval: RetrievalSettings,
    pub gate: GateSection,
    pub probe_timeout_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            corpus: PathBuf::from("ai_act.units"),
            index: PathBuf::from("ai_act.taix"),
            templates: None,
            catalog: None,
            audit_log: PathBuf::from("audit.jsonl"),
            backend: BackendSection::default(),
            retrieval: RetrievalSettings::default(),
            gate: GateSection::default(),
            probe_timeout_ms: 2000,
        }
    }
}

fn config_err(message: impl Into<String>) -> ServiceError {
    ServiceError::Config(message.into())
}

/// Sets `path` (already split on `__`) in a TOML table tree.
fn set_path(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ServiceError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = root;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override path crosses non-table key `{key}`")))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

fn parse_override(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match probe.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ServiceConfig {
    /// Parses `text`, applies `overrides` (variable name → value) and
    /// resolves relative paths against `base_dir`.
    pub fn from_toml_with_overrides(
        text: &str,
        base_dir: &Path,
        overrides: &BTreeMap<String, String>,
    ) -> Result<Self, ServiceError> {
        let mut table: toml::Table = text.parse().map_err(|e| config_err(format!("{e}")))?;
        for (name, raw) in overrides {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            if path.iter().any(String::is_empty) {
                return Err(config_err(format!("malformed override variable {name}")));
            }
            set_path(&mut table, &path, parse_override(raw))?;
        }
        let mut config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and applies `TAISCAN_*` variables from the environment.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let overrides: BTreeMap<String, String> = std::env::vars()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && !k.starts_with(LIVE_DIAGNOSTIC_PREFIX))
            .collect();
        Self::from_toml_with_overrides(&text, path.parent().unwrap_or(Path::new(".")), &overrides)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus);
        join(&mut self.index);
        join(&mut self.audit_log);
        for p in [&mut self.templates, &mut self.catalog, &mut self.backend.fixtures]
            .into_iter()
            .flatten()
        {
            join(p);
        }
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, ServiceError> {
        self.bind
            .parse()
            .map_err(|e| config_err(format!("bind address `{}`: {e}", self.bind)))
    }

    /// Checks everything that can be checked without touching the network.
    /// The index may be missing (the service then runs degraded).
    pub fn validate(&self) -> Result<(), ServiceError> {
        self.bind_addr()?;
        if !self.corpus.is_file() {
            return Err(config_err(format!("corpus {} does not exist", self.corpus.display())));
        }
        for (what, p) in [("templates", &self.templates), ("catalog", &self.catalog)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(config_err(format!("{what} {} does not exist", p.display())));
                }
            }
        }
        match self.backend.mode {
            BackendMode::Live => {
                self.backend.embedding.validate().map_err(|e| config_err(format!("embedding backend: {e}")))?;
                self.backend.generation.validate().map_err(|e| config_err(format!("generation backend: {e}")))?;
            }
            mode => {
                let dir = self
                    .backend
                    .fixtures
                    .as_ref()
                    .ok_or_else(|| config_err(format!("{mode} mode requires backend.fixtures")))?;
                if !dir.is_dir() {
                    return Err(config_err(format!("fixtures {} is not a directory", dir.display())));
                }
            }
        }
        if self.retrieval.k == 0 {
            return Err(config_err("retrieval.k must be at least 1"));
        }
        if self.retrieval.kinds.is_empty() {
            return Err(config_err("retrieval.kinds must not be empty"));
        }
        if self.gate.ttl_secs == 0 {
            return Err(config_err("gate.ttl_secs must be positive"));
        }
        if self.probe_timeout_ms == 0 {
            return Err(config_err("probe_timeout_ms must be positive"));
        }
        Ok(())
    }

    /// SHA-256 over the effective configuration with the gate secret
    /// removed; recorded with every audit entry.
    pub fn digest(&self) -> String {
        let mut redacted = self.clone();
        redacted.gate.secret = redacted.gate.secret.map(|_| "<redacted>".into());
        let json = serde_json::to_vec(&redacted).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Decoding parameters come from the generation backend section in
    /// every mode.
    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams::from(&self.backend.generation)
    }
}
