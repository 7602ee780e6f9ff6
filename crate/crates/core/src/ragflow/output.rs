//! The fenced answer block the answer template asks for:
//!
//! ````text
//! ```assessment
//! RISK_LEVEL: High-Risk
//! ARTICLES: 6, 9, 14
//! RECITALS:
//! ANNEXES: III
//! ```
//! ````
//!
//! Field names are exact; values are read leniently (brackets, `Article`
//! prefixes, `none`, decimal annex numbers are all accepted).

use std::collections::BTreeSet;

use super::{RagError, RiskLevel};
use crate::corpus::{roman_value, to_roman, Corpus, UnitKind, UnitRef};

const FIELDS: [&str; 4] = ["RISK_LEVEL", "ARTICLES", "RECITALS", "ANNEXES"];
pub const BLOCK_TAG: &str = "assessment";

/// Block contents before the references are checked against a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerBlock {
    pub risk_level: RiskLevel,
    /// Unique, in the order the model listed them.
    pub articles: Vec<UnitRef>,
    pub recitals: Vec<UnitRef>,
    pub annexes: Vec<UnitRef>,
}

/// Block contents with every reference resolved in the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAssessment {
    pub risk_level: RiskLevel,
    pub articles: Vec<UnitRef>,
    pub recitals: Vec<UnitRef>,
    pub annexes: Vec<UnitRef>,
    /// One entry per dropped reference.
    pub warnings: Vec<String>,
}

/// Canonical rendering of a block, fences included.
pub fn render_block(block: &AnswerBlock) -> String {
    let list = |refs: &[UnitRef]| {
        refs.iter()
            .map(|r| r.number().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    };
    format!(
        "```{BLOCK_TAG}\nRISK_LEVEL: {}\nARTICLES: {}\nRECITALS: {}\nANNEXES: {}\n```",
        block.risk_level.label(),
        list(&block.articles),
        list(&block.recitals),
        list(&block.annexes)
    )
}

fn malformed(message: impl Into<String>) -> RagError {
    RagError::MalformedOutput(message.into())
}

/// Lines of the first fenced block that carries a `RISK_LEVEL` field.
fn find_block(raw: &str) -> Result<Vec<&str>, RagError> {
    let mut lines = raw.lines();
    let mut saw_unterminated = false;
    while let Some(line) = lines.next() {
        let Some(info) = line.trim().strip_prefix("```") else {
            continue;
        };
        if info.contains('`') {
            continue;
        }
        let mut body = Vec::new();
        let mut closed = false;
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                closed = true;
                break;
            }
            body.push(inner);
        }
        let has_level = body
            .iter()
            .any(|l| l.trim_start().starts_with("RISK_LEVEL"));
        if !closed {
            saw_unterminated = has_level;
            break;
        }
        if has_level {
            return Ok(body);
        }
    }
    if saw_unterminated {
        Err(malformed("answer block is not closed"))
    } else {
        Err(malformed("no fenced answer block with a RISK_LEVEL field"))
    }
}

fn split_items(value: &str) -> Vec<&str> {
    let value = value.trim();
    let value = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(value);
    value
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn is_none_marker(value: &str) -> bool {
    matches!(
        value.trim().to_ascii_lowercase().as_str(),
        "" | "none" | "-" | "n/a" | "na" | "[]"
    )
}

fn strip_label<'a>(item: &'a str, labels: &[&str]) -> &'a str {
    let lower = item.to_ascii_lowercase();
    for label in labels {
        if lower.starts_with(label) {
            return item[label.len()..].trim_start_matches(['.', ' ']).trim();
        }
    }
    item
}

fn parse_refs(kind: UnitKind, value: &str) -> Result<Vec<UnitRef>, RagError> {
    if is_none_marker(value) {
        return Ok(Vec::new());
    }
    let labels: &[&str] = match kind {
        UnitKind::Article => &["articles", "article", "art"],
        UnitKind::Recital => &["recitals", "recital", "rec"],
        UnitKind::Annex => &["annexes", "annex"],
    };
    let mut out: Vec<UnitRef> = Vec::new();
    for item in split_items(value) {
        let token = strip_label(item, labels);
        let unit_ref = match kind {
            UnitKind::Annex => match token.parse::<u32>() {
                Ok(n) if n > 0 => to_roman(n).and_then(|r| UnitRef::new(kind, &r).ok()),
                _ => roman_value(&token.to_ascii_uppercase())
                    .and_then(|_| UnitRef::new(kind, &token.to_ascii_uppercase()).ok()),
            },
            _ => UnitRef::new(kind, token).ok(),
        }
        .ok_or_else(|| malformed(format!("{} list has unreadable item {item:?}", kind.as_str())))?;
        if !out.contains(&unit_ref) {
            out.push(unit_ref);
        }
    }
    Ok(out)
}

/// Extracts the answer block without consulting a corpus.
pub fn parse_block(raw: &str) -> Result<AnswerBlock, RagError> {
    let body = find_block(raw)?;
    let mut values: [Option<&str>; 4] = [None; 4];
    for line in body {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| malformed(format!("answer block line without a field: {line:?}")))?;
        let key = key.trim();
        let slot = FIELDS
            .iter()
            .position(|f| *f == key)
            .ok_or_else(|| malformed(format!("unknown answer block field {key:?}")))?;
        if values[slot].replace(value).is_some() {
            return Err(malformed(format!("answer block repeats {key}")));
        }
    }
    let [Some(level), Some(articles), Some(recitals), Some(annexes)] = values else {
        let missing: Vec<&str> = FIELDS
            .iter()
            .zip(values)
            .filter(|(_, v)| v.is_none())
            .map(|(f, _)| *f)
            .collect();
        return Err(malformed(format!("answer block misses {}", missing.join(", "))));
    };
    Ok(AnswerBlock {
        risk_level: level.parse()?,
        articles: parse_refs(UnitKind::Article, articles)?,
        recitals: parse_refs(UnitKind::Recital, recitals)?,
        annexes: parse_refs(UnitKind::Annex, annexes)?,
    })
}

/// Parses the generation output and keeps only references that exist in
/// `corpus`; dropped ones are reported as warnings.
pub fn parse_assessment(raw: &str, corpus: &Corpus) -> Result<ParsedAssessment, RagError> {
    let block = parse_block(raw)?;
    let mut warnings = Vec::new();
    let mut keep = |refs: Vec<UnitRef>| -> Vec<UnitRef> {
        refs.into_iter()
            .filter(|r| {
                let known = corpus.contains(r);
                if !known {
                    tracing::warn!(unit = %r, "generated reference not in corpus; dropped");
                    warnings.push(format!("dropped unknown reference {r}"));
                }
                known
            })
            .collect()
    };
    let articles = keep(block.articles);
    let recitals = keep(block.recitals);
    let annexes = keep(block.annexes);
    Ok(ParsedAssessment {
        risk_level: block.risk_level,
        articles,
        recitals,
        annexes,
        warnings,
    })
}

/// Sorted, de-duplicated article numbers; handy for comparisons.
pub fn article_numbers(refs: &[UnitRef]) -> BTreeSet<u32> {
    refs.iter()
        .filter(|r| r.kind() == UnitKind::Article)
        .map(UnitRef::ordinal)
        .collect()
}
