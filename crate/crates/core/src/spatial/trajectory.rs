//! Run-length collapsed location trajectory with a buffered, append-only sink.

use std::collections::VecDeque;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::LocationEstimate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SinkError {
    #[error("trajectory sink unavailable: {0}")]
    Unavailable(String),
}

/// One run of consecutive estimates in the same room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub room: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub estimates: usize,
}

pub trait TrajectorySink: Send {
    fn append(&mut self, row: &TrajectoryRow) -> Result<(), SinkError>;
}

/// In-memory sink with a switch for simulating outages.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    rows: Arc<Mutex<Vec<TrajectoryRow>>>,
    offline: Arc<AtomicBool>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> Vec<TrajectoryRow> {
        self.rows.lock().expect("sink poisoned").clone()
    }

    pub fn set_offline(&self, offline: bool) {
        self.offline.store(offline, Ordering::SeqCst);
    }
}

impl TrajectorySink for MemorySink {
    fn append(&mut self, row: &TrajectoryRow) -> Result<(), SinkError> {
        if self.offline.load(Ordering::SeqCst) {
            return Err(SinkError::Unavailable("offline".into()));
        }
        self.rows.lock().expect("sink poisoned").push(row.clone());
        Ok(())
    }
}

/// Appends rows as JSON Lines to a local file.
#[derive(Debug, Clone)]
pub struct JsonlFileSink {
    path: PathBuf,
}

impl JsonlFileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl TrajectorySink for JsonlFileSink {
    fn append(&mut self, row: &TrajectoryRow) -> Result<(), SinkError> {
        let mut line = serde_json::to_string(row).map_err(|e| SinkError::Unavailable(e.to_string()))?;
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| SinkError::Unavailable(e.to_string()))
    }
}

/// POSTs each row as JSON to a remote appender.
pub struct HttpSink {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpSink {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, SinkError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| SinkError::Unavailable(e.to_string()))?;
        Ok(Self { url: url.into(), client })
    }
}

impl TrajectorySink for HttpSink {
    fn append(&mut self, row: &TrajectoryRow) -> Result<(), SinkError> {
        let response = self
            .client
            .post(&self.url)
            .json(row)
            .send()
            .map_err(|e| SinkError::Unavailable(e.to_string()))?;
        if !response.status().is_success() {
            return Err(SinkError::Unavailable(format!("HTTP {}", response.status())));
        }
        Ok(())
    }
}

/// Collapses estimates into runs and forwards closed runs to the sink.
///
/// Sink failures never propagate: rows stay queued in order and are
/// retried on the next push or [`flush`](Self::flush).
pub struct TrajectoryWriter {
    sink: Box<dyn TrajectorySink>,
    open: Option<TrajectoryRow>,
    pending: VecDeque<TrajectoryRow>,
    history: Vec<TrajectoryRow>,
}

impl std::fmt::Debug for TrajectoryWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrajectoryWriter")
            .field("open", &self.open)
            .field("pending", &self.pending.len())
            .field("history", &self.history.len())
            .finish()
    }
}

impl TrajectoryWriter {
    pub fn new(sink: Box<dyn TrajectorySink>) -> Self {
        Self {
            sink,
            open: None,
            pending: VecDeque::new(),
            history: Vec::new(),
        }
    }

    /// Record an estimate. Returns false (and drops it) if it is older than
    /// the current run.
    pub fn push(&mut self, estimate: &LocationEstimate) -> bool {
        match &mut self.open {
            Some(run) if estimate.timestamp < run.end => {
                warn!(room = %estimate.room_label, "dropping out-of-order trajectory estimate");
                return false;
            }
            Some(run) if run.room == estimate.room_label => {
                run.end = estimate.timestamp;
                run.estimates += 1;
            }
            _ => {
                let next = TrajectoryRow {
                    room: estimate.room_label.clone(),
                    start: estimate.timestamp,
                    end: estimate.timestamp,
                    estimates: 1,
                };
                if let Some(closed) = self.open.replace(next) {
                    self.close(closed);
                }
            }
        }
        self.flush();
        true
    }

    fn close(&mut self, row: TrajectoryRow) {
        self.history.push(row.clone());
        self.pending.push_back(row);
    }

    /// Try to deliver queued rows. Returns how many are still pending.
    pub fn flush(&mut self) -> usize {
        while let Some(row) = self.pending.front() {
            match self.sink.append(row) {
                Ok(()) => {
                    self.pending.pop_front();
                }
                Err(err) => {
                    warn!(%err, pending = self.pending.len(), "trajectory sink write failed; buffering");
                    break;
                }
            }
        }
        self.pending.len()
    }

    /// Close the open run and flush.
    pub fn finish(&mut self) -> usize {
        if let Some(run) = self.open.take() {
            self.close(run);
        }
        self.flush()
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// All runs so far, including the one still open.
    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let mut rows = self.history.clone();
        rows.extend(self.open.clone());
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn est(room: &str, sec: u32) -> LocationEstimate {
        LocationEstimate {
            room_label: room.into(),
            confidence: 0.9,
            timestamp: Utc.with_ymd_and_hms(2024, 5, 2, 9, 0, sec).unwrap(),
        }
    }

    // independent run-length encoding of the room sequence
    fn runs(rooms: &[&str]) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for r in rooms {
            match out.last_mut() {
                Some((last, n)) if last == r => *n += 1,
                _ => out.push((r.to_string(), 1)),
            }
        }
        out
    }

    #[test]
    fn collapses_consecutive_duplicates() {
        let sink = MemorySink::new();
        let mut writer = TrajectoryWriter::new(Box::new(sink.clone()));
        let rooms = ["kitchen", "kitchen", "hall"];
        for (i, r) in rooms.iter().enumerate() {
            writer.push(&est(r, i as u32));
        }
        assert_eq!(writer.rows().len(), 2);
        writer.finish();
        let rows = sink.rows();
        let got: Vec<_> = rows.iter().map(|r| (r.room.clone(), r.estimates)).collect();
        assert_eq!(got, runs(&rooms));
        assert_eq!(rows[0].start, est("kitchen", 0).timestamp);
        assert_eq!(rows[0].end, est("kitchen", 1).timestamp);
    }

    #[test]
    fn empty_run_leaves_sink_unchanged() {
        let sink = MemorySink::new();
        let mut writer = TrajectoryWriter::new(Box::new(sink.clone()));
        assert_eq!(writer.finish(), 0);
        assert!(sink.rows().is_empty());
        assert!(writer.rows().is_empty());
    }

    #[test]
    fn outage_buffers_then_flushes_in_order() {
        let sink = MemorySink::new();
        let mut writer = TrajectoryWriter::new(Box::new(sink.clone()));
        sink.set_offline(true);
        let rooms = ["kitchen", "hall", "study", "hall", "kitchen"];
        for (i, r) in rooms.iter().enumerate() {
            assert!(writer.push(&est(r, i as u32)));
        }
        assert_eq!(writer.pending(), 4);
        assert!(sink.rows().is_empty());
        sink.set_offline(false);
        assert_eq!(writer.finish(), 0);
        let got: Vec<_> = sink.rows().iter().map(|r| r.room.clone()).collect();
        assert_eq!(got, rooms);
    }

    #[test]
    fn out_of_order_estimates_are_dropped() {
        let mut writer = TrajectoryWriter::new(Box::new(MemorySink::new()));
        assert!(writer.push(&est("kitchen", 5)));
        assert!(!writer.push(&est("hall", 3)));
        assert_eq!(writer.rows().len(), 1);
    }

    #[test]
    fn file_sink_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.jsonl");
        let mut writer = TrajectoryWriter::new(Box::new(JsonlFileSink::new(&path)));
        writer.push(&est("kitchen", 0));
        writer.push(&est("hall", 1));
        writer.finish();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<TrajectoryRow> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].room, "hall");
    }
}
