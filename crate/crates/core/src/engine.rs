//! One home's engine state: room map, diary, chat sessions, query log,
//! trajectory and the optional visual-aid ring buffer, with on-disk
//! persistence. The HTTP service and the CLI are thin wrappers over this.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::clock::SharedClock;
use crate::eval::{BatchTiming, TimingLog};
use crate::ingest::{Frame, FrameBatch, IngestConfig, IngestError, IngestStats, Ingestor, SkipReason, StageTimings};
use crate::providers::{ProviderError, Providers};
use crate::query::{has_wakeword, Answer, ChatSession, IntentCategory, QueryConfig, QueryEngine, QueryError};
use crate::spatial::{
    build_room_map, segment_walkthrough, HttpSink, JsonlFileSink, MemorySink, RoomMap, SpatialError, TrajectoryRow,
    TrajectorySink, TrajectoryWriter,
};
use crate::store::{ActivitiesDb, ActivityRecord, DiaryWriter, RecordId, StoreError};
use crate::text::{normalize_label, normalize_object};

const ROOM_MAP_FILE: &str = "room_map.json";
const ROOM_LABELS_FILE: &str = "room_labels.json";
const DIARY_FILE: &str = "diary.jsonl";
const QUERY_LOG_FILE: &str = "queries.jsonl";
const TRAJECTORY_FILE: &str = "trajectory.jsonl";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no room map yet; calibrate first")]
    NotCalibrated,
    #[error("object {0:?} has never been seen")]
    NoSighting(String),
    #[error("no image retained for {0:?}")]
    ImageNotRetained(String),
    #[error("diary already holds {0} records; import needs an empty diary")]
    ImportConflict(usize),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One frame of the calibration walkthrough, `t` seconds from its start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkthroughFrame {
    pub t: f64,
    #[serde(flatten)]
    pub frame: Frame,
}

/// A spoken room label at `t` seconds into the walkthrough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub t: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walkthrough {
    #[serde(default = "epoch")]
    pub started_at: DateTime<Utc>,
    #[serde(default)]
    pub frames: Vec<WalkthroughFrame>,
    #[serde(default)]
    pub labels: Vec<LabelEvent>,
}

fn epoch() -> DateTime<Utc> {
    DateTime::<Utc>::UNIX_EPOCH
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub calibration_id: String,
    pub rooms: Vec<String>,
}

impl CalibrationSummary {
    fn of(map: &RoomMap) -> Self {
        Self {
            calibration_id: map.calibration_id.clone(),
            rooms: map.labels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub query: QueryConfig,
    pub ingest: IngestConfig,
    /// Tiled images kept in memory for visual aids. 0 is text-only privacy
    /// mode: no image is kept or served.
    pub image_retention: usize,
    /// Ignore utterances without the wakeword.
    pub require_wakeword: bool,
    /// Where the diary, room map, query log and trajectory are persisted.
    pub data_dir: Option<PathBuf>,
    /// Remote trajectory appender; otherwise rows go to the data dir.
    pub trajectory_endpoint: Option<String>,
    #[serde(with = "crate::clock::serde_secs")]
    pub trajectory_timeout: Duration,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            query: QueryConfig::default(),
            ingest: IngestConfig::default(),
            image_retention: 0,
            require_wakeword: false,
            data_dir: None,
            trajectory_endpoint: None,
            trajectory_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReceipt {
    pub batch_id: String,
    pub accepted: bool,
    pub record_created: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<RecordId>,
    pub location: String,
    pub confidence: f64,
    pub hands: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<SkipReason>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub session_id: String,
    pub intent: IntentCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub wakeword_present: bool,
    #[serde(flatten)]
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLogEntry {
    pub t: DateTime<Utc>,
    pub session_id: String,
    pub transcript: String,
    pub answer: String,
    pub path: crate::query::AnswerPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_record: Option<RecordId>,
    #[serde(rename = "latency_ms", with = "crate::clock::serde_ms")]
    pub latency: Duration,
    pub wakeword_present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualAid {
    pub object: String,
    pub detected_label: String,
    pub timestamp: DateTime<Utc>,
    pub location: String,
    pub record_id: RecordId,
    pub source_batch: String,
    /// Tiled image of the batch, PNG encoded as base64.
    pub png_base64: String,
}

#[derive(Debug, Clone)]
struct RetainedImage {
    batch_id: String,
    png: Vec<u8>,
}

pub struct Engine {
    config: EngineConfig,
    providers: Providers,
    clock: SharedClock,
    room_map: Option<RoomMap>,
    /// Stored room label to current display label.
    labels: BTreeMap<String, String>,
    db: ActivitiesDb,
    sessions: HashMap<String, ChatSession>,
    query_log: Vec<QueryLogEntry>,
    ingestor: Ingestor,
    trajectory: TrajectoryWriter,
    images: VecDeque<RetainedImage>,
    diary_writer: Option<DiaryWriter>,
    query_writer: Option<File>,
    timings: TimingLog,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("calibrated", &self.room_map.is_some())
            .field("records", &self.db.len())
            .field("sessions", &self.sessions.len())
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Build an engine, restoring any state found in the data dir.
    pub fn new(config: EngineConfig, providers: Providers, clock: SharedClock) -> Result<Self, EngineError> {
        let dim = providers.dim()?;
        let mut engine = Self {
            ingestor: Ingestor::new(config.ingest.clone()),
            trajectory: TrajectoryWriter::new(Self::trajectory_sink(&config)?),
            config,
            providers,
            clock,
            room_map: None,
            labels: BTreeMap::new(),
            db: ActivitiesDb::new(dim),
            sessions: HashMap::new(),
            query_log: Vec::new(),
            images: VecDeque::new(),
            diary_writer: None,
            query_writer: None,
            timings: TimingLog::default(),
        };
        if let Some(dir) = engine.config.data_dir.clone() {
            engine.restore(&dir)?;
        }
        Ok(engine)
    }

    fn trajectory_sink(config: &EngineConfig) -> Result<Box<dyn TrajectorySink>, EngineError> {
        if let Some(url) = &config.trajectory_endpoint {
            let sink = HttpSink::new(url.clone(), config.trajectory_timeout)
                .map_err(|e| ProviderError::InvalidConfig(e.to_string()))?;
            return Ok(Box::new(sink));
        }
        Ok(match &config.data_dir {
            Some(dir) => Box::new(JsonlFileSink::new(dir.join(TRAJECTORY_FILE))),
            None => Box::new(MemorySink::new()),
        })
    }

    fn restore(&mut self, dir: &Path) -> Result<(), EngineError> {
        fs::create_dir_all(dir)?;
        let map_path = dir.join(ROOM_MAP_FILE);
        if map_path.exists() {
            let map = RoomMap::from_json(&fs::read_to_string(&map_path)?)?;
            info!(calibration = %map.calibration_id, "restored room map");
            self.room_map = Some(map);
        }
        let labels_path = dir.join(ROOM_LABELS_FILE);
        if labels_path.exists() {
            self.labels = serde_json::from_str(&fs::read_to_string(labels_path)?)?;
        }
        self.db = ActivitiesDb::load(&dir.join(DIARY_FILE), self.db.dim())?;
        let log_path = dir.join(QUERY_LOG_FILE);
        if log_path.exists() {
            for line in BufReader::new(File::open(&log_path)?).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    self.query_log.push(serde_json::from_str(&line)?);
                }
            }
        }
        self.diary_writer = Some(DiaryWriter::open(&dir.join(DIARY_FILE))?);
        self.query_writer = Some(OpenOptions::new().create(true).append(true).open(log_path)?);
        Ok(())
    }

    fn persist_map(&self) -> Result<(), EngineError> {
        if let (Some(dir), Some(map)) = (&self.config.data_dir, &self.room_map) {
            fs::write(dir.join(ROOM_MAP_FILE), map.to_json())?;
            fs::write(dir.join(ROOM_LABELS_FILE), serde_json::to_string(&self.labels)?)?;
        }
        Ok(())
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    pub fn room_map(&self) -> Option<&RoomMap> {
        self.room_map.as_ref()
    }

    pub fn db(&self) -> &ActivitiesDb {
        &self.db
    }

    pub fn query_log(&self) -> &[QueryLogEntry] {
        &self.query_log
    }

    pub fn timings(&self) -> &TimingLog {
        &self.timings
    }

    pub fn ingest_stats(&self) -> IngestStats {
        self.ingestor.stats()
    }

    pub fn session(&self, session_id: &str) -> Option<&ChatSession> {
        self.sessions.get(session_id)
    }

    /// Current display name of a stored room label.
    pub fn display_label<'a>(&'a self, stored: &'a str) -> &'a str {
        self.labels.get(stored).map(String::as_str).unwrap_or(stored)
    }

    /// Build the room map from a labeled walkthrough and make it current.
    pub fn calibrate(&mut self, walkthrough: &Walkthrough) -> Result<CalibrationSummary, EngineError> {
        if walkthrough.labels.is_empty() {
            return Err(SpatialError::NoLabels.into());
        }
        let frames = walkthrough
            .frames
            .iter()
            .map(|f| Ok((f.t, self.providers.frames.embed_frame(&f.frame)?)))
            .collect::<Result<Vec<_>, ProviderError>>()?;
        let labels: Vec<(f64, String)> = walkthrough.labels.iter().map(|l| (l.t, l.label.clone())).collect();
        let segments = segment_walkthrough(&frames, &labels)?;
        let map = build_room_map(&segments, walkthrough.started_at)?;
        self.install_room_map(map)
    }

    /// Use an existing room map, e.g. a fixture or a restored export.
    pub fn install_room_map(&mut self, map: RoomMap) -> Result<CalibrationSummary, EngineError> {
        map.validate()?;
        if let Some(dim) = map.dim().filter(|d| *d != self.db.dim()) {
            return Err(SpatialError::DimMismatch {
                expected: self.db.dim(),
                actual: dim,
            }
            .into());
        }
        let summary = CalibrationSummary::of(&map);
        self.room_map = Some(map);
        self.labels.clear();
        self.ingestor.reset_locations();
        self.persist_map()?;
        info!(calibration = %summary.calibration_id, rooms = ?summary.rooms, "room map installed");
        Ok(summary)
    }

    /// Rename a room. Existing records keep their stored label but are
    /// reported under the new one.
    pub fn rename_room(&mut self, old: &str, new: &str) -> Result<CalibrationSummary, EngineError> {
        let map = self.room_map.as_mut().ok_or(EngineError::NotCalibrated)?;
        map.rename(old, new)?;
        let (old, new) = (normalize_label(old), normalize_label(new));
        for current in self.labels.values_mut() {
            if *current == old {
                *current = new.clone();
            }
        }
        self.labels.entry(old).or_insert_with(|| new.clone());
        let summary = CalibrationSummary::of(self.room_map.as_ref().expect("checked above"));
        self.persist_map()?;
        Ok(summary)
    }

    pub fn ingest(&mut self, batch: &FrameBatch) -> Result<FrameReceipt, EngineError> {
        let map = self.room_map.as_ref().ok_or(EngineError::NotCalibrated)?;
        let (outcome, id) = self
            .ingestor
            .ingest(batch, &self.providers, self.clock.as_ref(), map, &mut self.db)?;
        self.trajectory.push(&outcome.estimate);
        if let Some(id) = id {
            if let (Some(writer), Some(record)) = (self.diary_writer.as_mut(), self.db.get(id)) {
                writer.append(record)?;
            }
        }
        if self.config.image_retention > 0 && outcome.record.is_some() {
            if let Some(tiled) = &outcome.tiled {
                let mut png = Vec::new();
                tiled
                    .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
                    .map_err(|e| IngestError::Image(e.to_string()))?;
                while self.images.len() >= self.config.image_retention {
                    self.images.pop_front();
                }
                self.images.push_back(RetainedImage {
                    batch_id: batch.batch_id.clone(),
                    png,
                });
            }
        }
        self.timings.batches.push(BatchTiming::from_outcome(&outcome));
        Ok(FrameReceipt {
            batch_id: outcome.batch_id,
            accepted: true,
            record_created: id.is_some(),
            record_id: id,
            location: outcome.estimate.room_label,
            confidence: outcome.estimate.confidence,
            hands: outcome.hands,
            skipped: outcome.skipped,
            timings: outcome.timings,
        })
    }

    /// Answer an utterance. `None` means it was ignored for lacking the
    /// wakeword.
    pub fn query(
        &mut self,
        session_id: &str,
        transcript: &str,
        now: DateTime<Utc>,
    ) -> Result<Option<QueryResponse>, EngineError> {
        if self.room_map.is_none() {
            return Err(EngineError::NotCalibrated);
        }
        let wakeword_present = has_wakeword(transcript);
        if self.config.require_wakeword && !wakeword_present {
            return Ok(None);
        }
        let cap = self.config.query.session_cap;
        let session = self
            .sessions
            .entry(session_id.to_string())
            .or_insert_with(|| ChatSession::new(session_id, cap));
        let engine = QueryEngine::new(&self.providers, self.clock.as_ref(), &self.config.query).with_labels(&self.labels);
        let (intent, answer) = engine.ask(transcript, &self.db, session, now)?;
        let object = session.last().and_then(|t| t.object.clone());

        let entry = QueryLogEntry {
            t: now,
            session_id: session_id.to_string(),
            transcript: transcript.to_string(),
            answer: answer.text.clone(),
            path: answer.path,
            supporting_record: answer.supporting_record,
            latency: answer.latency,
            wakeword_present,
        };
        if let Some(writer) = self.query_writer.as_mut() {
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            writer.write_all(line.as_bytes())?;
        }
        self.query_log.push(entry);
        self.timings.queries.push(answer.latency);
        Ok(Some(QueryResponse {
            session_id: session_id.to_string(),
            intent: intent.category,
            object,
            wakeword_present,
            answer,
        }))
    }

    /// Records at or after `since`, oldest first.
    pub fn activities(&self, since: Option<DateTime<Utc>>) -> Vec<&ActivityRecord> {
        self.db.between(since, None)
    }

    pub fn trajectory(&self) -> Vec<TrajectoryRow> {
        self.trajectory.rows()
    }

    /// Close the open trajectory run and deliver queued rows.
    pub fn flush_trajectory(&mut self) -> usize {
        self.trajectory.finish()
    }

    /// Full diary as versioned JSON Lines.
    pub fn export(&self) -> String {
        self.db.to_jsonl()
    }

    /// Load an exported diary into this engine's empty diary.
    pub fn import(&mut self, jsonl: &str) -> Result<usize, EngineError> {
        if !self.db.is_empty() {
            return Err(EngineError::ImportConflict(self.db.len()));
        }
        let db = ActivitiesDb::from_jsonl(jsonl.as_bytes(), self.db.dim())?;
        if let Some(writer) = self.diary_writer.as_mut() {
            for record in db.records() {
                writer.append(record)?;
            }
        }
        self.db = db;
        Ok(self.db.len())
    }

    /// Tiled image of the object's most recent sighting.
    pub fn visual_aid(&self, object: &str) -> Result<VisualAid, EngineError> {
        let object = normalize_object(object);
        if self.config.image_retention == 0 {
            return Err(EngineError::ImageNotRetained(object));
        }
        let record = self
            .db
            .last_seen(&object)
            .ok_or_else(|| EngineError::NoSighting(object.clone()))?;
        let image = self
            .images
            .iter()
            .rev()
            .find(|i| i.batch_id == record.source_batch)
            .ok_or_else(|| EngineError::ImageNotRetained(object.clone()))?;
        Ok(VisualAid {
            detected_label: object.clone(),
            object,
            timestamp: record.timestamp,
            location: self.display_label(&record.location).to_string(),
            record_id: record.record_id,
            source_batch: record.source_batch.clone(),
            png_base64: BASE64.encode(&image.png),
        })
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        let pending = self.trajectory.finish();
        if pending > 0 {
            warn!(pending, "trajectory rows undelivered at shutdown");
        }
    }
}
