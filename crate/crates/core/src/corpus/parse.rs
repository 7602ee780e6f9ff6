use std::sync::LazyLock;

use regex::Regex;

use super::{
    render_body, Corpus, CorpusError, CorpusMeta, DocUnit, KindCounts, Paragraph, UnitKind, UnitRef,
};

static ARTICLE_HEADING: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^Article (\d+)$").unwrap());
static ANNEX_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^ANNEX ([IVXLCDM]+)$").unwrap());
static RECITAL_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\((\d+)\) (.+)$").unwrap());
static STRUCTURE_HEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(CHAPTER|SECTION) ([IVXLCDM]+|\d+)$").unwrap());
static NUMBERED_PARAGRAPH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+)\. (.+)$").unwrap());

const ENACTING_FORMULA: &str = "HAVE ADOPTED THIS REGULATION:";

/// Collapses runs of blanks into a single space and trims the line.
pub fn normalize_line(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct UnitBuilder {
    unit_ref: UnitRef,
    title: Option<String>,
    wants_title: bool,
    paragraphs: Vec<Paragraph>,
}

impl UnitBuilder {
    fn titled(unit_ref: UnitRef) -> Self {
        Self {
            unit_ref,
            title: None,
            wants_title: true,
            paragraphs: Vec::new(),
        }
    }

    fn recital(unit_ref: UnitRef, first_line: String) -> Self {
        Self {
            unit_ref,
            title: None,
            wants_title: false,
            paragraphs: vec![Paragraph {
                label: String::new(),
                text: first_line,
            }],
        }
    }

    fn push_line(&mut self, line: String) {
        if self.wants_title {
            self.title = Some(line);
            self.wants_title = false;
            return;
        }
        if self.unit_ref.kind() != UnitKind::Recital {
            if let Some(caps) = NUMBERED_PARAGRAPH.captures(&line) {
                self.paragraphs.push(Paragraph {
                    label: caps[1].to_string(),
                    text: caps[2].to_string(),
                });
                return;
            }
        }
        match self.paragraphs.last_mut() {
            Some(p) => {
                p.text.push('\n');
                p.text.push_str(&line);
            }
            None => self.paragraphs.push(Paragraph {
                label: String::new(),
                text: line,
            }),
        }
    }

    fn finish(self) -> Result<DocUnit, CorpusError> {
        let body = render_body(&self.paragraphs);
        if body.trim().is_empty() {
            return Err(CorpusError::EmptyUnit(self.unit_ref));
        }
        Ok(DocUnit {
            unit_ref: self.unit_ref,
            title: self.title,
            body,
            paragraphs: self.paragraphs,
        })
    }
}

enum Region {
    Preamble,
    Enacting,
}

/// Parses consolidated regulation text into a [`Corpus`].
///
/// Recognised headings (each on its own line):
/// * `(<n>) ...` recitals, only before the enacting formula or the first
///   article/annex heading;
/// * `Article <n>` followed by a title line;
/// * `ANNEX <roman>` followed by a title line.
///
/// `CHAPTER`/`SECTION` headings and their title line close the current unit
/// and are otherwise dropped. Inside articles and annexes a line starting with
/// `<n>. ` opens a numbered paragraph; other text is appended to the previous
/// paragraph.
pub fn parse_document(raw: &str, meta: CorpusMeta) -> Result<Corpus, CorpusError> {
    let mut units = Vec::new();
    let mut current: Option<UnitBuilder> = None;
    let mut region = Region::Preamble;
    let mut skip_structure_title = false;

    let mut close = |current: &mut Option<UnitBuilder>| -> Result<(), CorpusError> {
        if let Some(builder) = current.take() {
            units.push(builder.finish()?);
        }
        Ok(())
    };

    for raw_line in raw.lines() {
        let line = normalize_line(raw_line);
        if line.is_empty() {
            continue;
        }

        if let Some(caps) = ARTICLE_HEADING.captures(&line) {
            close(&mut current)?;
            region = Region::Enacting;
            skip_structure_title = false;
            current = Some(UnitBuilder::titled(UnitRef::new(UnitKind::Article, &caps[1])?));
            continue;
        }
        if let Some(caps) = ANNEX_HEADING.captures(&line) {
            close(&mut current)?;
            region = Region::Enacting;
            skip_structure_title = false;
            current = Some(UnitBuilder::titled(UnitRef::new(UnitKind::Annex, &caps[1])?));
            continue;
        }
        if STRUCTURE_HEADING.is_match(&line) {
            close(&mut current)?;
            region = Region::Enacting;
            skip_structure_title = true;
            continue;
        }
        if skip_structure_title {
            skip_structure_title = false;
            continue;
        }

        match region {
            Region::Preamble => {
                if line == ENACTING_FORMULA {
                    close(&mut current)?;
                    region = Region::Enacting;
                } else if let Some(caps) = RECITAL_START.captures(&line) {
                    close(&mut current)?;
                    let unit_ref = UnitRef::new(UnitKind::Recital, &caps[1])?;
                    current = Some(UnitBuilder::recital(unit_ref, caps[2].to_string()));
                } else if let Some(builder) = current.as_mut() {
                    builder.push_line(line);
                }
                // Text before the first recital (title, citations) is not a unit.
            }
            Region::Enacting => {
                if let Some(builder) = current.as_mut() {
                    builder.push_line(line);
                }
            }
        }
    }
    close(&mut current)?;

    if units.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    Corpus::new(meta, units)
}

/// Counts unit headings by plain token inspection, without the parser's
/// patterns or state machine; used to cross-check [`parse_document`].
pub fn count_headings(raw: &str) -> KindCounts {
    let mut counts = KindCounts::default();
    let mut in_preamble = true;
    for line in raw.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["Article", n] if n.bytes().all(|b| b.is_ascii_digit()) => {
                counts.articles += 1;
                in_preamble = false;
            }
            ["ANNEX", n] if !n.is_empty() && n.bytes().all(|b| b"IVXLCDM".contains(&b)) => {
                counts.annexes += 1;
                in_preamble = false;
            }
            ["HAVE", "ADOPTED", "THIS", "REGULATION:"] => in_preamble = false,
            [first, _, ..] if in_preamble => {
                let digits = first
                    .strip_prefix('(')
                    .and_then(|t| t.strip_suffix(')'))
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
                if digits.is_some() {
                    counts.recitals += 1;
                }
            }
            _ => {}
        }
    }
    counts
}
