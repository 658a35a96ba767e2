//! Room-level localization against a per-home map built from a calibration
//! walkthrough.
//!
//! The walkthrough is cut into labeled segments, each segment's frame
//! embeddings are clustered into a few centroids, and rooms visited one
//! after another become adjacent. At run time a frame is assigned to the
//! room of its nearest centroid, with hysteresis against jumps between
//! rooms that are not adjacent.

mod calibration;
mod localize;
mod trajectory;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::text::normalize_label;

pub use calibration::{build_room_map, centroid_count, segment_walkthrough, spherical_kmeans, CalibrationSegment};
pub use localize::{localize, LocalizationParams, LocationEstimate, UNKNOWN_ROOM};
pub use trajectory::{
    HttpSink, JsonlFileSink, MemorySink, SinkError, TrajectoryRow, TrajectorySink, TrajectoryWriter,
};

pub const ROOM_MAP_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("walkthrough has no label events")]
    NoLabels,
    #[error("label events are not in time order")]
    LabelsOutOfOrder,
    #[error("walkthrough frames are not in time order")]
    FramesOutOfOrder,
    #[error("label at t={0} lies outside the frame time range")]
    LabelOutOfRange(f64),
    #[error("room label is empty after normalization")]
    EmptyLabel,
    #[error("segment for {0:?} contains no frames")]
    EmptySegment(String),
    #[error("no calibration segments")]
    EmptySegments,
    #[error("room map has no rooms")]
    EmptyMap,
    #[error("embedding dimension mismatch: map {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("unknown room {0:?}")]
    UnknownRoom(String),
    #[error("room {0:?} already exists")]
    DuplicateLabel(String),
    #[error("invalid room map: {0}")]
    InvalidMap(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub label: String,
    pub centroids: Vec<EmbeddingVector>,
}

/// Versioned, per-home spatial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomMap {
    pub version: u32,
    pub calibration_id: String,
    pub created_at: DateTime<Utc>,
    pub rooms: Vec<Room>,
    pub adjacency: BTreeMap<String, BTreeSet<String>>,
}

impl RoomMap {
    pub fn labels(&self) -> Vec<String> {
        self.rooms.iter().map(|r| r.label.clone()).collect()
    }

    pub fn room(&self, label: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.label == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.room(label).is_some()
    }

    pub fn are_adjacent(&self, a: &str, b: &str) -> bool {
        self.adjacency.get(a).is_some_and(|n| n.contains(b))
    }

    pub fn dim(&self) -> Option<usize> {
        self.rooms
            .first()
            .and_then(|r| r.centroids.first())
            .map(EmbeddingVector::dim)
    }

    /// Check every structural invariant of the map.
    pub fn validate(&self) -> Result<(), SpatialError> {
        if self.version != ROOM_MAP_VERSION {
            return Err(SpatialError::InvalidMap(format!("unsupported version {}", self.version)));
        }
        if self.rooms.is_empty() {
            return Err(SpatialError::EmptyMap);
        }
        let dim = self.dim().ok_or_else(|| SpatialError::InvalidMap("room without centroids".into()))?;
        let mut seen = BTreeSet::new();
        for room in &self.rooms {
            if room.label.is_empty() || normalize_label(&room.label) != room.label {
                return Err(SpatialError::InvalidMap(format!("label {:?} is not normalized", room.label)));
            }
            if !seen.insert(room.label.as_str()) {
                return Err(SpatialError::DuplicateLabel(room.label.clone()));
            }
            if room.centroids.is_empty() {
                return Err(SpatialError::InvalidMap(format!("room {:?} has no centroids", room.label)));
            }
            if let Some(c) = room.centroids.iter().find(|c| c.dim() != dim) {
                return Err(SpatialError::DimMismatch {
                    expected: dim,
                    actual: c.dim(),
                });
            }
        }
        for (a, neighbors) in &self.adjacency {
            if !seen.contains(a.as_str()) {
                return Err(SpatialError::UnknownRoom(a.clone()));
            }
            for b in neighbors {
                if !seen.contains(b.as_str()) {
                    return Err(SpatialError::UnknownRoom(b.clone()));
                }
                if a == b || !self.are_adjacent(b, a) {
                    return Err(SpatialError::InvalidMap(format!("adjacency {a:?}-{b:?} is not symmetric")));
                }
            }
        }
        Ok(())
    }

    /// Rename a room, carrying its centroids and adjacency edges over.
    pub fn rename(&mut self, old: &str, new: &str) -> Result<(), SpatialError> {
        let old = normalize_label(old);
        let new = normalize_label(new);
        if new.is_empty() {
            return Err(SpatialError::EmptyLabel);
        }
        if !self.contains(&old) {
            return Err(SpatialError::UnknownRoom(old));
        }
        if old == new {
            return Ok(());
        }
        if self.contains(&new) {
            return Err(SpatialError::DuplicateLabel(new));
        }
        for room in &mut self.rooms {
            if room.label == old {
                room.label = new.clone();
            }
        }
        let adjacency = std::mem::take(&mut self.adjacency);
        let swap = |label: String| if label == old { new.clone() } else { label };
        self.adjacency = adjacency
            .into_iter()
            .map(|(k, set)| (swap(k), set.into_iter().map(swap).collect()))
            .collect();
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("room maps always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, SpatialError> {
        let map: RoomMap = serde_json::from_str(text).map_err(|e| SpatialError::InvalidMap(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }
}
