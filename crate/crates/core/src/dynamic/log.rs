use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SessionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Opened,
    Committed,
    ObservedAttack,
    ObservedConsequence,
    Solved,
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub payload: Value,
    /// RFC 3339, UTC.
    pub ts: String,
}

pub(crate) fn now() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .expect("formattable timestamp")
}

/// Parses a log. A final line without its newline that fails to parse is
/// treated as an interrupted write and dropped; any other bad line is an
/// error.
pub fn parse_log(text: &str) -> Result<Vec<SessionEvent>, SessionError> {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut events = Vec::new();
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim_end_matches('\n').trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SessionEvent>(line) {
            Ok(e) => {
                let expected = events.len() as u64 + 1;
                if e.seq != expected {
                    return Err(SessionError::Log(format!(
                        "line {}: sequence number {} where {expected} was expected",
                        i + 1,
                        e.seq
                    )));
                }
                events.push(e);
            }
            Err(_) if i + 1 == lines.len() && !raw.ends_with('\n') => break,
            Err(err) => return Err(SessionError::Log(format!("line {}: {err}", i + 1))),
        }
    }
    Ok(events)
}

pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>, SessionError> {
    let raw = fs::read(path).map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
    parse_log(&String::from_utf8_lossy(&raw))
}

pub(crate) fn event_line(e: &SessionEvent) -> String {
    let mut s = serde_json::to_string(e).expect("events serialize");
    s.push('\n');
    s
}

/// Session logs under one directory, one `<id>.jsonl` file per session.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| SessionError::Io(format!("{}: {e}", dir.display())))?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    /// Appends events, repairing a torn final line first.
    pub fn append(&self, id: &str, events: &[SessionEvent]) -> Result<(), SessionError> {
        let path = self.path(id);
        let io = |e: std::io::Error| SessionError::Io(format!("{}: {e}", path.display()));
        if let Ok(raw) = fs::read(&path) {
            if !raw.is_empty() && !raw.ends_with(b"\n") {
                let keep = raw.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
                fs::write(&path, &raw[..keep]).map_err(io)?;
            }
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let text: String = events.iter().map(event_line).collect();
        f.write_all(text.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    pub fn read(&self, id: &str) -> Result<Vec<SessionEvent>, SessionError> {
        let path = self.path(id);
        if !path.exists() {
            return Err(SessionError::NotFound(id.to_string()));
        }
        read_log(&path)
    }

    /// Replays a stored session. Events regenerated after a torn tail are
    /// written back so later appends continue the sequence.
    pub fn restore(&self, id: &str) -> Result<super::Session, SessionError> {
        let events = self.read(id)?;
        let s = super::Session::replay(&events)?;
        if s.log.len() > events.len() {
            self.append(id, &s.log[events.len()..])?;
        }
        Ok(s)
    }

    pub fn delete(&self, id: &str) -> Result<(), SessionError> {
        fs::remove_file(self.path(id)).map_err(|_| SessionError::NotFound(id.to_string()))
    }

    /// Session ids with a log file, sorted.
    pub fn ids(&self) -> Vec<String> {
        let mut out: Vec<String> = fs::read_dir(&self.dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        out.sort();
        out
    }
}
