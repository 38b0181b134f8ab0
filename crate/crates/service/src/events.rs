//! Append-only event log (`events.jsonl`), one JSON object per line.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use segtriage_core::metrics::DiceReport;
use segtriage_core::score::ScoreRecord;
use segtriage_core::QualityModel;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Accept,
    Annotate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Ingested {
        item_id: String,
        image_id: String,
        /// SHA-256 of the bundle bytes; the blob lives at `blobs/<sha>.ubnd`.
        blob: String,
        class_names: Vec<String>,
        background_index: usize,
        height: usize,
        width: usize,
        record: ScoreRecord,
        at: DateTime<Utc>,
    },
    Decided {
        item_id: String,
        action: Action,
        /// SHA-256 of the corrected label raster, stored at `blobs/<sha>.label`.
        label_blob: Option<String>,
        /// Dice of the prediction against the corrected label.
        dice: Option<DiceReport>,
        decided_by: Option<String>,
        at: DateTime<Utc>,
    },
    ModelFitted {
        version: u32,
        alpha: f64,
        trained_on: Vec<String>,
        model: QualityModel,
        at: DateTime<Utc>,
    },
}

pub struct EventLog {
    file: File,
}

impl EventLog {
    /// Opens (or creates) the log and returns every complete event in it.
    ///
    /// A final line without a newline is a write interrupted by a crash; it is
    /// cut off so the next append starts clean. Any other unparsable line is
    /// an error.
    pub fn open(path: &Path) -> io::Result<(EventLog, Vec<Event>)> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut events = Vec::new();
        let mut reader = BufReader::new(&file);
        let mut good_len = 0u64;
        let mut line = String::new();
        let mut line_no = 0;
        loop {
            line.clear();
            let read = reader.read_line(&mut line)?;
            if read == 0 {
                break;
            }
            line_no += 1;
            if !line.ends_with('\n') {
                break;
            }
            if line.trim().is_empty() {
                good_len += read as u64;
                continue;
            }
            let event = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(io::ErrorKind::InvalidData, format!("events line {line_no}: {e}"))
            })?;
            events.push(event);
            good_len += read as u64;
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok((EventLog { file }, events))
    }

    /// Writes one event and syncs it to disk before returning.
    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decided(id: &str) -> Event {
        Event::Decided {
            item_id: id.into(),
            action: Action::Accept,
            label_blob: None,
            dice: None,
            decided_by: Some("qa".into()),
            at: DateTime::from_timestamp(1_700_000_000, 0).unwrap(),
        }
    }

    #[test]
    fn append_then_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let (mut log, events) = EventLog::open(&path).unwrap();
        assert!(events.is_empty());
        log.append(&decided("a")).unwrap();
        log.append(&decided("b")).unwrap();
        drop(log);
        let (_, events) = EventLog::open(&path).unwrap();
        assert_eq!(events, vec![decided("a"), decided("b")]);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let (mut log, _) = EventLog::open(&path).unwrap();
        log.append(&decided("a")).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"type":"decided","item_"#).unwrap();
        drop(f);
        let (mut log, events) = EventLog::open(&path).unwrap();
        assert_eq!(events.len(), 1);
        log.append(&decided("b")).unwrap();
        drop(log);
        let (_, events) = EventLog::open(&path).unwrap();
        assert_eq!(events, vec![decided("a"), decided("b")]);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(EventLog::open(&path).is_err());
    }
}
