//! On-disk record store: one newline-delimited JSON file per record class.
//!
//! `submissions.ndjson` is rewritten through a temporary file and a rename on
//! every append, so a crash leaves either the old or the new file.
//! `events.ndjson` is a plain append-only log.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use promtrial_core::analytics::EventRecord;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SUBMISSIONS_FILE: &str = "submissions.ndjson";
pub const EVENTS_FILE: &str = "events.ndjson";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    pub assignment_id: String,
    pub subject: String,
    pub received_at: DateTime<Utc>,
    /// The ClinicalData document as stored after server-side validation.
    pub clinical_data: String,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    submissions: Mutex<Vec<u8>>,
    events: Mutex<File>,
}

impl Store {
    /// Open or create the store in `dir`, returning the submissions already on
    /// disk.
    pub fn open(dir: &Path) -> Result<(Self, Vec<SubmissionRecord>), StoreError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let sub_path = dir.join(SUBMISSIONS_FILE);
        let raw = match fs::read(&sub_path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&sub_path)(e)),
        };
        let mut records = Vec::new();
        for (i, line) in raw.split(|b| *b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let rec = serde_json::from_slice(line).map_err(|source| StoreError::Corrupt {
                path: sub_path.clone(),
                line: i + 1,
                source,
            })?;
            records.push(rec);
        }
        let ev_path = dir.join(EVENTS_FILE);
        let events = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ev_path)
            .map_err(io_err(&ev_path))?;
        let store = Self {
            dir: dir.to_owned(),
            submissions: Mutex::new(raw),
            events: Mutex::new(events),
        };
        Ok((store, records))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append_submission(&self, rec: &SubmissionRecord) -> Result<(), StoreError> {
        let path = self.dir.join(SUBMISSIONS_FILE);
        let tmp = self.dir.join(format!("{SUBMISSIONS_FILE}.tmp"));
        let mut raw = self.submissions.lock().unwrap_or_else(|e| e.into_inner());
        let mut next = raw.clone();
        if !next.is_empty() && !next.ends_with(b"\n") {
            next.push(b'\n');
        }
        next.extend(serde_json::to_vec(rec).expect("submission record serializes"));
        next.push(b'\n');
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&next).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        *raw = next;
        Ok(())
    }

    pub fn append_event(&self, ev: &EventRecord) -> Result<(), StoreError> {
        let path = self.dir.join(EVENTS_FILE);
        let mut line = ev.to_json_line();
        line.push('\n');
        let mut f = self.events.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes()).map_err(io_err(&path))
    }

    /// Every event line written so far, in append order.
    pub fn read_events(&self) -> Result<Vec<EventRecord>, StoreError> {
        let path = self.dir.join(EVENTS_FILE);
        let _guard = self.events.lock().unwrap_or_else(|e| e.into_inner());
        let f = File::open(&path).map_err(io_err(&path))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                    path: path.clone(),
                    line: i + 1,
                    source,
                })?,
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use promtrial_core::analytics::EventKind;

    fn rec(id: &str) -> SubmissionRecord {
        SubmissionRecord {
            assignment_id: id.into(),
            subject: "P".into(),
            received_at: Utc.timestamp_opt(1_456_480_800, 0).unwrap(),
            clinical_data: "<ODM/>\n".into(),
        }
    }

    #[test]
    fn submissions_survive_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (store, found) = Store::open(dir.path()).unwrap();
        assert!(found.is_empty());
        store.append_submission(&rec("A1")).unwrap();
        store.append_submission(&rec("A2")).unwrap();
        drop(store);
        let (_, found) = Store::open(dir.path()).unwrap();
        assert_eq!(found, [rec("A1"), rec("A2")]);
        assert!(!dir.path().join("submissions.ndjson.tmp").exists());
    }

    #[test]
    fn corrupt_submission_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(SUBMISSIONS_FILE), "{not json\n").unwrap();
        assert!(matches!(
            Store::open(dir.path()),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn events_append_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = Store::open(dir.path()).unwrap();
        let t = Utc.timestamp_opt(1_456_480_800, 0).unwrap();
        store
            .append_event(&EventRecord::new(t, "s", EventKind::Logout))
            .unwrap();
        store
            .append_event(&EventRecord::new(t, "s", EventKind::LoginSuccess))
            .unwrap();
        let kinds: Vec<EventKind> = store
            .read_events()
            .unwrap()
            .iter()
            .map(|e| e.kind)
            .collect();
        assert_eq!(kinds, [EventKind::Logout, EventKind::LoginSuccess]);
    }
}
