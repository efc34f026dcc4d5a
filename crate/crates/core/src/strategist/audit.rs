//! Append-only, line-delimited JSON audit trail.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditEvent {
    Observation,
    Advice,
    Decision,
    PersonaAccepted,
    PersonaRejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub ts: String,
    pub run_id: String,
    pub event: AuditEvent,
    pub payload: serde_json::Value,
    pub rationale: String,
}

fn last_byte(path: &Path) -> std::io::Result<Option<u8>> {
    let mut f = File::open(path)?;
    if f.metadata()?.len() == 0 {
        return Ok(None);
    }
    f.seek(SeekFrom::End(-1))?;
    let mut b = [0u8];
    f.read_exact(&mut b)?;
    Ok(Some(b[0]))
}

/// Single writer handle on an audit file.
pub struct AuditLog {
    file: File,
    path: PathBuf,
    run_id: String,
    last: Option<DateTime<Utc>>,
}

impl AuditLog {
    /// Opens `path` for appending, creating it if needed. A torn last line
    /// left by a crash is terminated so that new records start on their own
    /// line.
    pub fn open(path: impl AsRef<Path>, run_id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        if last_byte(&path).map_err(|e| Error::io(&path, e))?.is_some_and(|b| b != b'\n') {
            file.write_all(b"\n").map_err(Error::Audit)?;
        }
        Ok(AuditLog {
            file,
            path,
            run_id: run_id.into(),
            last: None,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one record as a single line and flushes it.
    pub fn append(
        &mut self,
        event: AuditEvent,
        payload: serde_json::Value,
        rationale: &str,
    ) -> Result<AuditRecord> {
        let now = Utc::now();
        let ts = match self.last {
            Some(prev) if prev > now => prev,
            _ => now,
        };
        self.last = Some(ts);
        let record = AuditRecord {
            ts: ts.to_rfc3339_opts(SecondsFormat::Micros, true),
            run_id: self.run_id.clone(),
            event,
            payload,
            rationale: rationale.to_string(),
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(Error::Audit)?;
        self.file.flush().map_err(Error::Audit)?;
        Ok(record)
    }
}

/// Reads every record. Lines that do not parse are torn writes from a crash
/// and are skipped.
pub fn read_audit(path: impl AsRef<Path>) -> Result<Vec<AuditRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        if let Ok(r) = serde_json::from_str::<AuditRecord>(line.trim_end()) {
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn appends_are_ordered_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        let mut log = AuditLog::open(&path, "r1").unwrap();
        log.append(AuditEvent::Observation, json!({"k": 1}), "first").unwrap();
        log.append(AuditEvent::Decision, json!(null), "two\nlines").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let recs = read_audit(&path).unwrap();
        assert_eq!(recs[0].rationale, "first");
        assert_eq!(recs[1].rationale, "two\nlines");
        assert!(recs[0].ts <= recs[1].ts);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.log");
        {
            let mut log = AuditLog::open(&path, "r1").unwrap();
            log.append(AuditEvent::Advice, json!([1, 2]), "kept").unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"ts\":\"2024-").unwrap();
        drop(f);
        let recs = read_audit(&path).unwrap();
        assert_eq!(recs.len(), 1);
        let mut log = AuditLog::open(&path, "r1").unwrap();
        log.append(AuditEvent::Advice, json!(0), "after").unwrap();
        let recs = read_audit(&path).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].rationale, "after");
    }
}
