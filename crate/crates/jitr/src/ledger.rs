//! Append-only event log.
//!
//! Each record is one line `<byte length> <json>\n`, where the JSON is an
//! [`Entry`] and offsets count up from 0. The length prefix makes torn or
//! edited lines detectable.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::Path;

use jitr_core::lifecycle::{LifecycleEvent, LifecycleState};
use jitr_core::miner::{PromptTemplate, TaskId, TaskSignals};
use jitr_core::monitor::{Offer, OfferStatus};
use jitr_core::zoo::CandidateScore;
use serde::{Deserialize, Serialize};

use crate::artifact::ArtifactSummary;
use crate::wire::ServedBy;

/// How a request was routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteMode {
    /// Plain LLM call.
    Llm,
    /// LLM call through the wrapper prompt.
    Wrapped,
    /// LLM answers; the surrogate is scored silently.
    Shadow,
    /// Surrogate answers.
    Surrogate,
    /// Surrogate answers; the LLM is asked too, for drift monitoring.
    Probe,
}

impl RouteMode {
    pub fn served_by(self) -> ServedBy {
        match self {
            RouteMode::Llm | RouteMode::Shadow => ServedBy::Llm,
            RouteMode::Wrapped => ServedBy::LlmWrapped,
            RouteMode::Surrogate | RouteMode::Probe => ServedBy::Surrogate,
        }
    }
}

/// One intercepted request and its answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub request_id: String,
    pub task_id: Option<TaskId>,
    pub model: String,
    /// Rendered request text.
    pub prompt: String,
    /// What the client received (an error message on upstream failure).
    pub response: String,
    pub mode: RouteMode,
    pub served_by: ServedBy,
    pub wrapped: bool,
    /// Tokens billed on the serving route.
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Estimated tokens without the wrapper (equal to the billed ones when
    /// unwrapped).
    pub base_prompt_tokens: u64,
    pub base_completion_tokens: u64,
    /// Client-visible latency.
    pub latency_ms: f64,
    pub timestamp_ms: u64,
    /// Signals parsed from a wrapped answer.
    pub signals: Option<TaskSignals>,
    /// The LLM's answer to the user request (inner JSON when wrapped).
    pub user_response: Option<String>,
    /// Label the task schema extracts from `user_response`.
    pub label: Option<String>,
    pub surrogate_label: Option<String>,
    pub surrogate_latency_ms: Option<f64>,
    pub llm_latency_ms: Option<f64>,
    pub unparseable: bool,
    pub upstream_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub task_id: TaskId,
    pub from: LifecycleState,
    pub to: LifecycleState,
    pub event: LifecycleEvent,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    TaskCreated {
        task_id: TaskId,
        /// Founding prompt; its signature is the cluster exemplar.
        exemplar: String,
        timestamp_ms: u64,
        /// Set for tasks registered by an operator.
        template: Option<PromptTemplate>,
    },
    Trace(TraceEvent),
    Template {
        task_id: TaskId,
        template: PromptTemplate,
    },
    Transition(Transition),
    Search {
        task_id: TaskId,
        examples: usize,
        ranking: Vec<CandidateScore>,
    },
    Artifact(ArtifactSummary),
    Offer(Offer),
    OfferDecision {
        offer_id: u64,
        status: OfferStatus,
    },
    Routing {
        task_id: TaskId,
        /// `None` sends the task back to the LLM.
        artifact_id: Option<String>,
        generation: u64,
    },
    JobFailed {
        task_id: TaskId,
        stage: String,
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub offset: u64,
    pub record: Record,
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("corrupt ledger record at offset {offset} (byte {byte}): {reason}")]
    Corrupt { offset: u64, byte: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode(entry: &Entry) -> Vec<u8> {
    let json = serde_json::to_vec(entry).expect("ledger records serialize");
    let mut line = format!("{} ", json.len()).into_bytes();
    line.extend_from_slice(&json);
    line.push(b'\n');
    line
}

/// Decodes a whole ledger, stopping at the first corrupt record.
pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>, LedgerError> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let offset = out.len() as u64;
        let corrupt = |reason: String| LedgerError::Corrupt { offset, byte: pos, reason };
        let space = bytes[pos..]
            .iter()
            .take(21)
            .position(|&b| b == b' ')
            .ok_or_else(|| corrupt("missing length prefix".into()))?;
        let len: usize = std::str::from_utf8(&bytes[pos..pos + space])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad length prefix".into()))?;
        let start = pos + space + 1;
        let end = start.checked_add(len).filter(|&e| e < bytes.len()).ok_or_else(|| corrupt("truncated record".into()))?;
        if bytes[end] != b'\n' {
            return Err(corrupt("record length does not match".into()));
        }
        let entry: Entry = serde_json::from_slice(&bytes[start..end]).map_err(|e| corrupt(e.to_string()))?;
        if entry.offset != offset {
            return Err(corrupt(format!("expected offset {offset}, found {}", entry.offset)));
        }
        out.push(entry);
        pos = end + 1;
    }
    Ok(out)
}

pub fn read_ledger(path: &Path) -> Result<Vec<Entry>, LedgerError> {
    match File::open(path) {
        Ok(mut f) => {
            let mut bytes = Vec::new();
            f.read_to_end(&mut bytes)?;
            decode(&bytes)
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

enum Sink {
    File { file: File, fsync: bool },
    Writer(Box<dyn Write + Send>),
    Memory(Vec<u8>),
}

/// Appends records. A failed write keeps the bytes buffered and retries them
/// before the next record, so offsets stay dense and ordered.
pub struct LedgerWriter {
    sink: Sink,
    next_offset: u64,
    pending: Vec<u8>,
}

impl LedgerWriter {
    /// Opens (or creates) a ledger file and returns the records already in it.
    pub fn open(path: &Path, fsync: bool) -> Result<(Self, Vec<Entry>), LedgerError> {
        let existing = read_ledger(path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let w = LedgerWriter { sink: Sink::File { file, fsync }, next_offset: existing.len() as u64, pending: Vec::new() };
        Ok((w, existing))
    }

    pub fn in_memory() -> Self {
        LedgerWriter { sink: Sink::Memory(Vec::new()), next_offset: 0, pending: Vec::new() }
    }

    pub fn from_writer(w: Box<dyn Write + Send>, next_offset: u64) -> Self {
        LedgerWriter { sink: Sink::Writer(w), next_offset, pending: Vec::new() }
    }

    pub fn next_offset(&self) -> u64 {
        self.next_offset
    }

    /// Bytes written so far, for in-memory ledgers.
    pub fn memory(&self) -> Option<&[u8]> {
        match &self.sink {
            Sink::Memory(b) => Some(b),
            _ => None,
        }
    }

    /// Bytes waiting for a successful write.
    pub fn pending_bytes(&self) -> usize {
        self.pending.len()
    }

    pub fn append(&mut self, record: Record) -> (u64, Entry) {
        let entry = Entry { offset: self.next_offset, record };
        self.next_offset += 1;
        self.pending.extend_from_slice(&encode(&entry));
        if let Err(e) = self.flush_pending() {
            log::warn!("ledger write failed, {} bytes buffered for retry: {e}", self.pending.len());
        }
        (entry.offset, entry)
    }

    pub fn flush_pending(&mut self) -> io::Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let result = match &mut self.sink {
            Sink::File { file, fsync } => file.write_all(&self.pending).and_then(|_| if *fsync { file.sync_data() } else { Ok(()) }),
            Sink::Writer(w) => w.write_all(&self.pending).and_then(|_| w.flush()),
            Sink::Memory(b) => {
                b.extend_from_slice(&self.pending);
                Ok(())
            }
        };
        if result.is_ok() {
            self.pending.clear();
        }
        result
    }
}
