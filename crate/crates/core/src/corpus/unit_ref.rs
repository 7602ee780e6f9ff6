use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CorpusError;

/// Structural unit kinds of an EU regulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Article,
    Recital,
    Annex,
}

impl UnitKind {
    pub const ALL: [UnitKind; 3] = [UnitKind::Article, UnitKind::Recital, UnitKind::Annex];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Article => "article",
            UnitKind::Recital => "recital",
            UnitKind::Annex => "annex",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "article" | "articles" => Ok(UnitKind::Article),
            "recital" | "recitals" => Ok(UnitKind::Recital),
            "annex" | "annexes" => Ok(UnitKind::Annex),
            other => Err(CorpusError::InvalidRef(format!("unknown unit kind `{other}`"))),
        }
    }
}

/// Address of a unit in the corpus, e.g. `article:6` or `annex:III`.
///
/// Articles and recitals are numbered with positive decimals, annexes with
/// canonical Roman numerals. Ordering is by kind, then by numeric value, so
/// `annex:IV` sorts before `annex:X`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UnitRef {
    kind: UnitKind,
    number: String,
    ordinal: u32,
}

impl UnitRef {
    pub fn new(kind: UnitKind, number: &str) -> Result<Self, CorpusError> {
        let number = number.trim();
        if number.is_empty() {
            return Err(CorpusError::InvalidRef(format!("empty {kind} number")));
        }
        let ordinal = match kind {
            UnitKind::Article | UnitKind::Recital => {
                if !number.bytes().all(|b| b.is_ascii_digit()) || number.starts_with('0') {
                    return Err(CorpusError::InvalidRef(format!(
                        "{kind} number `{number}` is not a positive integer"
                    )));
                }
                number.parse::<u32>().map_err(|_| {
                    CorpusError::InvalidRef(format!("{kind} number `{number}` out of range"))
                })?
            }
            UnitKind::Annex => roman_value(number).ok_or_else(|| {
                CorpusError::InvalidRef(format!("annex number `{number}` is not a Roman numeral"))
            })?,
        };
        Ok(Self {
            kind,
            number: number.to_string(),
            ordinal,
        })
    }

    pub fn article(number: u32) -> Self {
        Self::numbered(UnitKind::Article, number)
    }

    pub fn recital(number: u32) -> Self {
        Self::numbered(UnitKind::Recital, number)
    }

    /// Annex from its numeric value; `annex(3)` is `annex:III`.
    ///
    /// Panics if `number` is outside 1..=3999.
    pub fn annex(number: u32) -> Self {
        let label = to_roman(number).expect("annex number must be in 1..=3999");
        Self {
            kind: UnitKind::Annex,
            number: label,
            ordinal: number,
        }
    }

    fn numbered(kind: UnitKind, number: u32) -> Self {
        assert!(number > 0, "{kind} numbers start at 1");
        Self {
            kind,
            number: number.to_string(),
            ordinal: number,
        }
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    /// The label as written in the document ("6", "III").
    pub fn number(&self) -> &str {
        &self.number
    }

    /// Numeric value of the label (Roman numerals decoded).
    pub fn ordinal(&self) -> u32 {
        self.ordinal
    }

    /// Human heading, e.g. "Article 6" or "Annex III".
    pub fn heading(&self) -> String {
        match self.kind {
            UnitKind::Article => format!("Article {}", self.number),
            UnitKind::Recital => format!("Recital ({})", self.number),
            UnitKind::Annex => format!("Annex {}", self.number),
        }
    }
}

impl fmt::Display for UnitRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.number)
    }
}

impl FromStr for UnitRef {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, number) = s
            .split_once(':')
            .ok_or_else(|| CorpusError::InvalidRef(format!("`{s}` is not of the form kind:number")))?;
        let kind = match kind {
            "article" => UnitKind::Article,
            "recital" => UnitKind::Recital,
            "annex" => UnitKind::Annex,
            other => {
                return Err(CorpusError::InvalidRef(format!("unknown unit kind `{other}`")));
            }
        };
        if number.trim() != number {
            return Err(CorpusError::InvalidRef(format!("`{s}` has surrounding whitespace")));
        }
        UnitRef::new(kind, number)
    }
}

impl PartialOrd for UnitRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for UnitRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then(self.ordinal.cmp(&other.ordinal))
            .then_with(|| self.number.cmp(&other.number))
    }
}

impl Serialize for UnitRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for UnitRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const ROMAN_TABLE: [(u32, &str); 13] = [
    (1000, "M"),
    (900, "CM"),
    (500, "D"),
    (400, "CD"),
    (100, "C"),
    (90, "XC"),
    (50, "L"),
    (40, "XL"),
    (10, "X"),
    (9, "IX"),
    (5, "V"),
    (4, "IV"),
    (1, "I"),
];

pub fn to_roman(mut value: u32) -> Option<String> {
    if value == 0 || value > 3999 {
        return None;
    }
    let mut out = String::new();
    for (v, sym) in ROMAN_TABLE {
        while value >= v {
            out.push_str(sym);
            value -= v;
        }
    }
    Some(out)
}

/// Decodes a canonical (upper-case, subtractive) Roman numeral.
pub fn roman_value(s: &str) -> Option<u32> {
    if s.is_empty() || s.len() > 15 {
        return None;
    }
    let mut rest = s;
    let mut total = 0;
    for (v, sym) in ROMAN_TABLE {
        // At most three repeats of a single symbol, one of a pair.
        let max = if sym.len() == 1 { 3 } else { 1 };
        let mut n = 0;
        while n < max && rest.starts_with(sym) {
            rest = &rest[sym.len()..];
            total += v;
            n += 1;
        }
    }
    if !rest.is_empty() {
        return None;
    }
    // Rejects non-canonical spellings such as "IIV" or "VX".
    (to_roman(total).as_deref() == Some(s)).then_some(total)
}
