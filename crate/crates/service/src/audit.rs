//! Append-only audit log: one JSON record per line, fsynced per append.
//!
//! Appends go through a single writer thread, so record ids are strictly
//! increasing and lines never interleave. Reopening the same file continues
//! the id sequence; a torn trailing line left by a crash is truncated.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::oneshot;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("audit log {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("audit writer stopped")]
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditKind {
    Prescreen,
    Assess,
}

/// Everything a caller supplies; id and timestamp are assigned on append.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub kind: AuditKind,
    pub request: serde_json::Value,
    pub response: serde_json::Value,
    pub prompt_version: Option<String>,
    pub embedding_model: Option<String>,
    pub generation_model: Option<String>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub id: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub entry: AuditEntry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub id: u64,
    pub timestamp: DateTime<Utc>,
    pub kind: AuditKind,
    /// Risk label of the outcome or result.
    pub risk: Option<String>,
}

impl AuditSummary {
    fn of(record: &AuditRecord) -> Self {
        let key = match record.entry.kind {
            AuditKind::Prescreen => "risk",
            AuditKind::Assess => "risk_level",
        };
        Self {
            id: record.id,
            timestamp: record.timestamp,
            kind: record.entry.kind,
            risk: record.entry.response.get(key).and_then(|v| v.as_str()).map(str::to_string),
        }
    }
}

#[derive(Debug, Clone)]
struct Slot {
    summary: AuditSummary,
    offset: u64,
    len: usize,
}

type Reply = oneshot::Sender<Result<AuditRecord, AuditError>>;

/// Cloneable handle to the log.
#[derive(Debug, Clone)]
pub struct AuditLog {
    path: PathBuf,
    slots: Arc<RwLock<Vec<Slot>>>,
    tx: mpsc::Sender<(AuditEntry, Reply)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AuditError + '_ {
    move |source| AuditError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads existing records; returns them with the byte length of the valid
/// prefix.
fn scan(path: &Path, text: &[u8]) -> Result<(Vec<Slot>, u64), AuditError> {
    let mut slots: Vec<Slot> = Vec::new();
    let mut offset = 0usize;
    let mut line_no = 0;
    while offset < text.len() {
        line_no += 1;
        let Some(nl) = text[offset..].iter().position(|&b| b == b'\n') else {
            // Torn final write: no newline, record never acknowledged.
            break;
        };
        let line = &text[offset..offset + nl];
        let record: AuditRecord = match serde_json::from_slice(line) {
            Ok(r) => r,
            Err(e) => {
                return Err(AuditError::Corrupt {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        };
        if let Some(prev) = slots.last() {
            if record.id <= prev.summary.id {
                return Err(AuditError::Corrupt {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("record id {} does not follow {}", record.id, prev.summary.id),
                });
            }
        }
        slots.push(Slot {
            summary: AuditSummary::of(&record),
            offset: offset as u64,
            len: nl,
        });
        offset += nl + 1;
    }
    Ok((slots, offset as u64))
}

impl AuditLog {
    /// Opens (creating if needed) the log and starts the writer thread.
    pub fn open(path: &Path) -> Result<Self, AuditError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(io_err(path))?;
        let mut existing = Vec::new();
        file.read_to_end(&mut existing).map_err(io_err(path))?;
        let (slots, valid_len) = scan(path, &existing)?;
        if valid_len < existing.len() as u64 {
            tracing::warn!(path = %path.display(), dropped = existing.len() as u64 - valid_len, "truncating torn audit record");
            file.set_len(valid_len).map_err(io_err(path))?;
        }
        let next_id = slots.last().map_or(1, |s| s.summary.id + 1);
        let slots = Arc::new(RwLock::new(slots));

        let (tx, rx) = mpsc::channel::<(AuditEntry, Reply)>();
        let writer = Writer {
            path: path.to_path_buf(),
            file,
            end: valid_len,
            next_id,
            slots: Arc::clone(&slots),
        };
        std::thread::Builder::new()
            .name("audit-writer".into())
            .spawn(move || writer.run(rx))
            .map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            slots,
            tx,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends an entry and waits until it is durable.
    pub async fn append(&self, entry: AuditEntry) -> Result<AuditRecord, AuditError> {
        let (reply, rx) = oneshot::channel();
        self.tx.send((entry, reply)).map_err(|_| AuditError::Closed)?;
        rx.await.map_err(|_| AuditError::Closed)?
    }

    pub fn len(&self) -> usize {
        self.slots.read().expect("audit index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Summaries in id order.
    pub fn list(&self, offset: usize, limit: usize) -> Vec<AuditSummary> {
        let slots = self.slots.read().expect("audit index lock");
        slots.iter().skip(offset).take(limit).map(|s| s.summary.clone()).collect()
    }

    /// Full record, read back from the file.
    pub async fn get(&self, id: u64) -> Result<Option<AuditRecord>, AuditError> {
        let slot = {
            let slots = self.slots.read().expect("audit index lock");
            match slots.binary_search_by_key(&id, |s| s.summary.id) {
                Ok(pos) => slots[pos].clone(),
                Err(_) => return Ok(None),
            }
        };
        let path = self.path.clone();
        tokio::task::spawn_blocking(move || read_slot(&path, &slot))
            .await
            .map_err(|_| AuditError::Closed)?
            .map(Some)
    }
}

fn read_slot(path: &Path, slot: &Slot) -> Result<AuditRecord, AuditError> {
    let mut file = File::open(path).map_err(io_err(path))?;
    file.seek(SeekFrom::Start(slot.offset)).map_err(io_err(path))?;
    let mut buf = vec![0; slot.len];
    file.read_exact(&mut buf).map_err(io_err(path))?;
    serde_json::from_slice(&buf).map_err(|e| AuditError::Corrupt {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

struct Writer {
    path: PathBuf,
    file: File,
    end: u64,
    next_id: u64,
    slots: Arc<RwLock<Vec<Slot>>>,
}

impl Writer {
    fn run(mut self, rx: mpsc::Receiver<(AuditEntry, Reply)>) {
        for (entry, reply) in rx {
            let _ = reply.send(self.append(entry));
        }
    }

    fn append(&mut self, entry: AuditEntry) -> Result<AuditRecord, AuditError> {
        let record = AuditRecord {
            id: self.next_id,
            timestamp: Utc::now(),
            entry,
        };
        let mut line = serde_json::to_vec(&record).expect("audit record serializes");
        let len = line.len();
        line.push(b'\n');
        let written = self
            .file
            .seek(SeekFrom::Start(self.end))
            .and_then(|_| self.file.write_all(&line))
            .and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            // Drop any partial line so the next append starts clean.
            let _ = self.file.set_len(self.end);
            return Err(io_err(&self.path)(e));
        }
        self.slots.write().expect("audit index lock").push(Slot {
            summary: AuditSummary::of(&record),
            offset: self.end,
            len,
        });
        self.end += line.len() as u64;
        self.next_id += 1;
        Ok(record)
    }
}
