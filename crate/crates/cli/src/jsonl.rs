//! Reading and writing traces as JSON lines.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use abstract_map::{Event, TraceEvent};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: time runs backwards ({before} then {after})")]
    TimeReversed { line: usize, before: f64, after: f64 },
    #[error("trace has no world header")]
    NoHeader,
}

/// One compact JSON object per event, newline terminated.
pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace events always serialise"));
        out.push('\n');
    }
    out
}

pub fn write_trace(path: &Path, events: &[TraceEvent]) -> io::Result<()> {
    fs::write(path, to_jsonl(events))
}

/// Parses a trace, checking that it opens with a world header and that time
/// never runs backwards. Blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(line).map_err(|e| TraceError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = events.last() {
            if event.t < prev.t {
                return Err(TraceError::TimeReversed {
                    line: line_no,
                    before: prev.t,
                    after: event.t,
                });
            }
        }
        events.push(event);
    }
    match events.first() {
        Some(TraceEvent { event: Event::World { .. }, .. }) => Ok(events),
        _ => Err(TraceError::NoHeader),
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceEvent>, TraceError> {
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_trace(&text)
}
