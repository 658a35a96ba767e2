//! Scenario batch file: JSON Lines, one batch per line. The same line
//! carries the frames and the scripted provider behaviour for mock replay.

use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Frame, FrameBatch, IngestError};
use crate::embedding::EmbeddingVector;
use crate::providers::{BatchFault, ScriptBook, ScriptEntry};

pub const DEFAULT_SESSION: &str = "default";

fn default_session() -> String {
    DEFAULT_SESSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchLine {
    pub batch_id: String,
    #[serde(alias = "captured_at")]
    pub t: DateTime<Utc>,
    #[serde(default = "default_session")]
    pub session_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hands: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<Frame>,
    /// Shorthand for frames that carry only a precomputed embedding.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embeddings: Vec<EmbeddingVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vlm: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<BatchFault>,
}

impl BatchLine {
    pub fn batch(&self) -> FrameBatch {
        let mut frames = self.frames.clone();
        frames.extend(self.embeddings.iter().cloned().map(Frame::from_embedding));
        FrameBatch {
            batch_id: self.batch_id.clone(),
            session_id: self.session_id.clone(),
            captured_at: self.t,
            frames,
        }
    }

    pub fn script_entry(&self) -> ScriptEntry {
        ScriptEntry {
            hands: self.hands,
            vlm: self.vlm.clone(),
            fault: self.fault,
        }
    }

    pub fn register(&self, script: &ScriptBook) {
        script.register(self.batch_id.clone(), self.script_entry());
    }
}

/// Parse a batch file. Blank lines and lines starting with `#` are skipped.
pub fn read_batch_lines(reader: impl BufRead) -> Result<Vec<BatchLine>, IngestError> {
    read_json_lines(reader)
}

/// Parse a stream file of [`StreamFrame`] lines.
pub fn read_stream_frames(reader: impl BufRead) -> Result<Vec<StreamFrame>, IngestError> {
    read_json_lines(reader)
}

fn read_json_lines<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed = serde_json::from_str(trimmed).map_err(|e| IngestError::BadLine {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        out.push(parsed);
    }
    Ok(out)
}

/// One frame of a continuous camera stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamFrame {
    #[serde(alias = "captured_at")]
    pub t: DateTime<Utc>,
    /// On-device hand detector verdict for this frame, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hands: Option<bool>,
    #[serde(flatten)]
    pub frame: Frame,
}

/// Cut a time-ordered stream into one batch per `cadence` window. A batch
/// has hands when any of its frames does and carries its last frame's time.
pub fn batch_by_cadence(
    frames: &[StreamFrame],
    cadence: chrono::Duration,
    session_id: &str,
) -> Result<Vec<BatchLine>, IngestError> {
    if let Some(i) = frames.windows(2).position(|w| w[1].t < w[0].t) {
        return Err(IngestError::BadLine {
            line: i + 2,
            detail: format!("stream goes back in time at {}", frames[i + 1].t),
        });
    }
    let mut batches: Vec<BatchLine> = Vec::new();
    let Some(first) = frames.first() else {
        return Ok(batches);
    };
    let step = cadence.num_milliseconds().max(1);
    let mut current: Option<(i64, BatchLine)> = None;
    for f in frames {
        let window = (f.t - first.t).num_milliseconds() / step;
        if current.as_ref().is_some_and(|(w, _)| *w != window) {
            batches.extend(current.take().map(|(_, b)| b));
        }
        let (_, batch) = current.get_or_insert_with(|| {
            (
                window,
                BatchLine {
                    batch_id: format!("{session_id}-{window}"),
                    t: f.t,
                    session_id: session_id.to_string(),
                    hands: None,
                    frames: Vec::new(),
                    embeddings: Vec::new(),
                    vlm: None,
                    fault: None,
                },
            )
        });
        batch.t = f.t;
        batch.frames.push(f.frame.clone());
        batch.hands = match (batch.hands, f.hands) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), _) | (_, Some(false)) => Some(false),
            _ => None,
        };
    }
    batches.extend(current.map(|(_, b)| b));
    Ok(batches)
}
