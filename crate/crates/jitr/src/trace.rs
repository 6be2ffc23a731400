//! Request traces: JSONL of `{timestamp, prompt, ground_truth_label?}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLine {
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_label: Option<String>,
    /// Upstream model; the simulation default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("trace line {line}: {source}")]
    Malformed { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_trace(reader: impl BufRead) -> Result<Vec<TraceLine>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t = serde_json::from_str(&line).map_err(|source| TraceError::Malformed { line: i + 1, source })?;
        out.push(t);
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceLine>, TraceError> {
    parse_trace(BufReader::new(File::open(path)?))
}

pub fn write_trace(path: &Path, lines: &[TraceLine]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        serde_json::to_writer(&mut w, l)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
