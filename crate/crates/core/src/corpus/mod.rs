//! Typed, addressable corpus of AI Act units (articles, recitals, annexes).
//!
//! The corpus is built once by [`parse_document`] and is immutable
//! afterwards; it can be shared freely between threads.

mod parse;
mod store;
mod unit_ref;

use std::collections::HashMap;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{count_headings, normalize_line, parse_document};
pub use store::{load_corpus, read_corpus, store_corpus, write_corpus, UNITS_EXTENSION};
pub use unit_ref::{roman_value, to_roman, UnitKind, UnitRef};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no article, recital or annex headings found")]
    EmptyDocument,
    #[error("unit {0} appears more than once")]
    DuplicateUnit(UnitRef),
    #[error("unit {0} has no body text")]
    EmptyUnit(UnitRef),
    #[error("unknown unit {0}")]
    UnknownRef(UnitRef),
    #[error("invalid unit reference: {0}")]
    InvalidRef(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed units record at line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    /// Paragraph number as printed ("1", "2", ...); empty for unnumbered text.
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocUnit {
    #[serde(rename = "ref")]
    pub unit_ref: UnitRef,
    pub title: Option<String>,
    pub body: String,
    pub paragraphs: Vec<Paragraph>,
}

impl DocUnit {
    pub fn kind(&self) -> UnitKind {
        self.unit_ref.kind()
    }

    /// Heading plus title, e.g. "Article 14 - Human Oversight".
    pub fn display_title(&self) -> String {
        match &self.title {
            Some(t) => format!("{} - {}", self.unit_ref.heading(), t),
            None => self.unit_ref.heading(),
        }
    }

    /// Text used to embed the unit: heading, title and body.
    pub fn embedding_text(&self) -> String {
        format!("{}\n{}", self.display_title(), self.body)
    }
}

/// Rebuilds a unit body from its paragraphs.
pub fn render_body(paragraphs: &[Paragraph]) -> String {
    paragraphs
        .iter()
        .map(|p| {
            if p.label.is_empty() {
                p.text.clone()
            } else {
                format!("{}. {}", p.label, p.text)
            }
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub source: String,
    pub version: String,
    pub ingested_at: DateTime<Utc>,
}

impl CorpusMeta {
    pub fn new(source: impl Into<String>, version: impl Into<String>, ingested_at: DateTime<Utc>) -> Self {
        Self {
            source: source.into(),
            version: version.into(),
            ingested_at,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub articles: usize,
    pub recitals: usize,
    pub annexes: usize,
}

impl KindCounts {
    pub fn get(&self, kind: UnitKind) -> usize {
        match kind {
            UnitKind::Article => self.articles,
            UnitKind::Recital => self.recitals,
            UnitKind::Annex => self.annexes,
        }
    }

    pub fn total(&self) -> usize {
        self.articles + self.recitals + self.annexes
    }
}

impl std::fmt::Display for KindCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "articles={} recitals={} annexes={}",
            self.articles, self.recitals, self.annexes
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    meta: CorpusMeta,
    units: Vec<DocUnit>,
    index: HashMap<UnitRef, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate refs and empty bodies.
    pub fn new(meta: CorpusMeta, units: Vec<DocUnit>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(units.len());
        for (pos, unit) in units.iter().enumerate() {
            if unit.body.trim().is_empty() {
                return Err(CorpusError::EmptyUnit(unit.unit_ref.clone()));
            }
            if index.insert(unit.unit_ref.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateUnit(unit.unit_ref.clone()));
            }
        }
        Ok(Self { meta, units, index })
    }

    pub fn meta(&self) -> &CorpusMeta {
        &self.meta
    }

    pub fn units(&self) -> &[DocUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn get_unit(&self, unit_ref: &UnitRef) -> Result<&DocUnit, CorpusError> {
        self.position(unit_ref)
            .map(|pos| &self.units[pos])
            .ok_or_else(|| CorpusError::UnknownRef(unit_ref.clone()))
    }

    pub fn contains(&self, unit_ref: &UnitRef) -> bool {
        self.index.contains_key(unit_ref)
    }

    pub fn position(&self, unit_ref: &UnitRef) -> Option<usize> {
        self.index.get(unit_ref).copied()
    }

    pub fn units_of(&self, kind: UnitKind) -> impl Iterator<Item = &DocUnit> {
        self.units.iter().filter(move |u| u.kind() == kind)
    }

    pub fn counts(&self) -> KindCounts {
        let mut counts = KindCounts::default();
        for unit in &self.units {
            match unit.kind() {
                UnitKind::Article => counts.articles += 1,
                UnitKind::Recital => counts.recitals += 1,
                UnitKind::Annex => counts.annexes += 1,
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(r: UnitRef, body: &str) -> DocUnit {
        DocUnit {
            unit_ref: r,
            title: None,
            body: body.into(),
            paragraphs: vec![Paragraph {
                label: String::new(),
                text: body.into(),
            }],
        }
    }

    fn meta() -> CorpusMeta {
        CorpusMeta::new("test", "1", DateTime::from_timestamp(0, 0).unwrap())
    }

    #[test]
    fn lookup_agrees_with_order() {
        let corpus = Corpus::new(
            meta(),
            vec![
                unit(UnitRef::recital(1), "r"),
                unit(UnitRef::article(1), "a"),
                unit(UnitRef::annex(1), "x"),
            ],
        )
        .unwrap();
        for (pos, u) in corpus.units().iter().enumerate() {
            assert_eq!(corpus.position(&u.unit_ref), Some(pos));
        }
        assert_eq!(
            corpus.counts(),
            KindCounts {
                articles: 1,
                recitals: 1,
                annexes: 1
            }
        );
    }

    #[test]
    fn unknown_ref() {
        let corpus = Corpus::new(meta(), vec![unit(UnitRef::article(1), "a")]).unwrap();
        assert!(matches!(
            corpus.get_unit(&UnitRef::article(999)),
            Err(CorpusError::UnknownRef(_))
        ));
    }

    #[test]
    fn duplicates_rejected() {
        let err = Corpus::new(
            meta(),
            vec![unit(UnitRef::article(1), "a"), unit(UnitRef::article(1), "b")],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateUnit(r) if r == UnitRef::article(1)));
    }
}
