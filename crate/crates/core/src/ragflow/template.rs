//! `{{name}}` prompt templates with a version line.
//!
//! A template file starts with `# version: <label>`; everything after that
//! line is the template body. Placeholders are checked when the file is
//! loaded, so rendering never meets an unknown name.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::RagError;

pub const REWRITE_FILE: &str = "rewrite.tmpl";
pub const ANSWER_FILE: &str = "answer.tmpl";

const BUNDLED_REWRITE: &str = include_str!("../../assets/prompts/rewrite.tmpl");
const BUNDLED_ANSWER: &str = include_str!("../../assets/prompts/answer.tmpl");

/// Placeholders available to both templates.
pub const INPUT_FIELDS: [&str; 6] = [
    "role",
    "domain",
    "system_type",
    "input_data",
    "intended_use",
    "query",
];

/// Extra placeholders available to the answer template only.
pub const ANSWER_ONLY_FIELDS: [&str; 2] = ["rewritten_query", "context"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    declared_version: String,
    source: String,
    segments: Vec<Segment>,
}

impl Template {
    /// Parses a template file's contents; `allowed` lists the placeholder
    /// names it may use and `required` those it must use.
    pub fn parse(text: &str, allowed: &[&str], required: &[&str]) -> Result<Self, RagError> {
        let (first, body) = text.split_once('\n').unwrap_or((text, ""));
        let declared_version = first
            .trim()
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|rest| rest.strip_prefix("version:"))
            .map(str::trim)
            .filter(|v| !v.is_empty() && !v.contains(char::is_whitespace))
            .ok_or_else(|| {
                RagError::Template("first line must be `# version: <label>`".into())
            })?
            .to_string();

        let mut segments = Vec::new();
        let mut rest = body;
        while let Some(open) = rest.find("{{") {
            if open > 0 {
                segments.push(Segment::Text(rest[..open].to_string()));
            }
            let after = &rest[open + 2..];
            let close = after
                .find("}}")
                .ok_or_else(|| RagError::Template("unterminated `{{` placeholder".into()))?;
            let name = after[..close].trim();
            if !allowed.contains(&name) {
                return Err(RagError::Template(format!("unknown placeholder {{{{{name}}}}}")));
            }
            segments.push(Segment::Field(name.to_string()));
            rest = &after[close + 2..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Text(rest.to_string()));
        }
        for name in required {
            if !segments.iter().any(|s| matches!(s, Segment::Field(f) if f == name)) {
                return Err(RagError::Template(format!("missing placeholder {{{{{name}}}}}")));
            }
        }
        Ok(Self {
            declared_version,
            source: body.to_string(),
            segments,
        })
    }

    pub fn declared_version(&self) -> &str {
        &self.declared_version
    }

    pub fn body(&self) -> &str {
        &self.source
    }

    /// Substitutes every placeholder in one pass; substituted values are
    /// never re-scanned.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> Result<String, RagError> {
        let mut out = String::with_capacity(self.source.len() * 2);
        for segment in &self.segments {
            match segment {
                Segment::Text(t) => out.push_str(t),
                Segment::Field(name) => out.push_str(values.get(name.as_str()).ok_or_else(|| {
                    RagError::Template(format!("no value for placeholder {{{{{name}}}}}"))
                })?),
            }
        }
        Ok(out)
    }
}

/// The rewrite and answer templates plus their combined version string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub rewrite: Template,
    pub answer: Template,
    version: String,
}

impl PromptTemplate {
    pub fn from_sources(rewrite: &str, answer: &str) -> Result<Self, RagError> {
        let rewrite = Template::parse(rewrite, &INPUT_FIELDS, &["query"])?;
        let answer_fields: Vec<&str> = INPUT_FIELDS.iter().chain(&ANSWER_ONLY_FIELDS).copied().collect();
        let answer = Template::parse(answer, &answer_fields, &["context"])?;

        let mut hasher = Sha256::new();
        hasher.update(rewrite.body().as_bytes());
        hasher.update([0u8]);
        hasher.update(answer.body().as_bytes());
        let digest = hex::encode(hasher.finalize());
        let version = format!(
            "rewrite@{}/answer@{}/{}",
            rewrite.declared_version(),
            answer.declared_version(),
            &digest[..8]
        );
        Ok(Self {
            rewrite,
            answer,
            version,
        })
    }

    /// Templates shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_sources(BUNDLED_REWRITE, BUNDLED_ANSWER).expect("bundled templates are valid")
    }

    /// Loads `rewrite.tmpl` and `answer.tmpl` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, RagError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map_err(|e| RagError::Template(format!("{}: {e}", path.display())))
        };
        Self::from_sources(&read(REWRITE_FILE)?, &read(ANSWER_FILE)?)
    }

    /// Declared versions plus a short hash of both bodies; any edit to
    /// either template changes it.
    pub fn version(&self) -> &str {
        &self.version
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn renders_in_one_pass() {
        let t = Template::parse("# version: 1\nA {{query}} B {{ role }}", &INPUT_FIELDS, &[]).unwrap();
        let out = t
            .render(&values(&[("query", "{{role}}"), ("role", "Provider")]))
            .unwrap();
        assert_eq!(out, "A {{role}} B Provider");
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(Template::parse("no version\n{{query}}", &INPUT_FIELDS, &[]).is_err());
        assert!(Template::parse("# version: 1\n{{nope}}", &INPUT_FIELDS, &[]).is_err());
        assert!(Template::parse("# version: 1\n{{query", &INPUT_FIELDS, &[]).is_err());
        assert!(Template::parse("# version: 1\nplain", &INPUT_FIELDS, &["query"]).is_err());
    }

    #[test]
    fn version_tracks_bodies() {
        let a = PromptTemplate::bundled();
        assert!(a.version().starts_with("rewrite@"));
        let edited = format!("{BUNDLED_ANSWER}\n");
        let b = PromptTemplate::from_sources(BUNDLED_REWRITE, &edited).unwrap();
        assert_ne!(a.version(), b.version());
        let same = PromptTemplate::from_sources(BUNDLED_REWRITE, BUNDLED_ANSWER).unwrap();
        assert_eq!(a.version(), same.version());
    }

    #[test]
    fn load_dir_reads_both_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(REWRITE_FILE), BUNDLED_REWRITE).unwrap();
        std::fs::write(dir.path().join(ANSWER_FILE), BUNDLED_ANSWER).unwrap();
        assert_eq!(PromptTemplate::load_dir(dir.path()).unwrap(), PromptTemplate::bundled());
        std::fs::remove_file(dir.path().join(ANSWER_FILE)).unwrap();
        assert!(PromptTemplate::load_dir(dir.path()).is_err());
    }
}
