//! Line-delimited `.units` record format.
//!
//! The first line is a `{"meta": {...}}` header; every following line is one
//! flat unit record with `ref`, `kind`, `number`, `title`, `body` and
//! `paragraphs`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, CorpusMeta, DocUnit, Paragraph, UnitKind, UnitRef};

pub const UNITS_EXTENSION: &str = "units";

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    meta: CorpusMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitRecord {
    #[serde(rename = "ref")]
    unit_ref: UnitRef,
    kind: UnitKind,
    number: String,
    title: Option<String>,
    body: String,
    paragraphs: Vec<Paragraph>,
}

/// Writes the corpus and returns the number of unit records written.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<usize> {
    let header = MetaRecord {
        meta: corpus.meta().clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for unit in corpus.units() {
        let record = UnitRecord {
            unit_ref: unit.unit_ref.clone(),
            kind: unit.kind(),
            number: unit.unit_ref.number().to_string(),
            title: unit.title.clone(),
            body: unit.body.clone(),
            paragraphs: unit.paragraphs.clone(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(corpus.len())
}

pub fn store_corpus(corpus: &Corpus, destination: &Path) -> Result<usize, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: destination.to_path_buf(),
        source,
    };
    let file = File::create(destination).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    let n = write_corpus(corpus, &mut out).map_err(io_err)?;
    out.into_inner()
        .map_err(|e| io_err(e.into_error()))?
        .sync_all()
        .map_err(io_err)?;
    Ok(n)
}

pub fn read_corpus<R: Read>(input: R) -> Result<Corpus, CorpusError> {
    let reader = BufReader::new(input);
    let mut meta = None;
    let mut units = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let format_err = |e: serde_json::Error| CorpusError::Format {
            line: line_no,
            message: e.to_string(),
        };
        if meta.is_none() {
            let header: MetaRecord = serde_json::from_str(&line).map_err(format_err)?;
            meta = Some(header.meta);
            continue;
        }
        let record: UnitRecord = serde_json::from_str(&line).map_err(format_err)?;
        if record.kind != record.unit_ref.kind() || record.number != record.unit_ref.number() {
            return Err(CorpusError::Format {
                line: line_no,
                message: format!(
                    "ref {} disagrees with kind `{}` / number `{}`",
                    record.unit_ref, record.kind, record.number
                ),
            });
        }
        units.push(DocUnit {
            unit_ref: record.unit_ref,
            title: record.title,
            body: record.body,
            paragraphs: record.paragraphs,
        });
    }
    let meta = meta.ok_or(CorpusError::Format {
        line: 1,
        message: "missing meta header".into(),
    })?;
    Corpus::new(meta, units)
}

pub fn load_corpus(source: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(source).map_err(|e| CorpusError::Io {
        path: source.to_path_buf(),
        source: e,
    })?;
    read_corpus(file)
}
