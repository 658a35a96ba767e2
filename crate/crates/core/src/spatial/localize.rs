use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{RoomMap, SpatialError};
use crate::embedding::EmbeddingVector;
use crate::store::cosine;

/// Emitted when no room is similar enough to the frame.
pub const UNKNOWN_ROOM: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationEstimate {
    pub room_label: String,
    pub confidence: f64,
    pub timestamp: DateTime<Utc>,
}

impl LocationEstimate {
    pub fn is_unknown(&self) -> bool {
        self.room_label == UNKNOWN_ROOM
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizationParams {
    /// A jump to a room not adjacent to the current one needs the best room
    /// to beat the runner-up by more than this cosine margin.
    pub hysteresis_margin: f64,
    /// Below this top similarity the estimate is [`UNKNOWN_ROOM`].
    pub unknown_threshold: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            hysteresis_margin: 0.05,
            unknown_threshold: 0.2,
        }
    }
}

/// Nearest-centroid room assignment with adjacency hysteresis.
pub fn localize(
    frame_embedding: &EmbeddingVector,
    map: &RoomMap,
    previous: Option<&LocationEstimate>,
    params: &LocalizationParams,
    timestamp: DateTime<Utc>,
) -> Result<LocationEstimate, SpatialError> {
    let dim = map.dim().ok_or(SpatialError::EmptyMap)?;
    if frame_embedding.dim() != dim {
        return Err(SpatialError::DimMismatch {
            expected: dim,
            actual: frame_embedding.dim(),
        });
    }

    // best centroid similarity per room, in map order
    let scores: Vec<(&str, f64)> = map
        .rooms
        .iter()
        .map(|room| {
            let best = room
                .centroids
                .iter()
                .map(|c| cosine(frame_embedding, c).unwrap_or(0.0))
                .fold(f64::NEG_INFINITY, f64::max);
            (room.label.as_str(), best)
        })
        .collect();
    let mut ranked = scores.clone();
    // stable sort keeps map order among equal scores
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (candidate, top) = ranked[0];
    let runner_up = ranked.get(1).map(|r| r.1).unwrap_or(f64::NEG_INFINITY);

    if top < params.unknown_threshold {
        return Ok(LocationEstimate {
            room_label: UNKNOWN_ROOM.to_string(),
            confidence: top.clamp(0.0, 1.0),
            timestamp,
        });
    }

    if let Some(prev) = previous.filter(|p| !p.is_unknown() && map.contains(&p.room_label)) {
        let current = prev.room_label.as_str();
        let blocked = candidate != current && !map.are_adjacent(current, candidate);
        if blocked && top - runner_up <= params.hysteresis_margin {
            let held = scores
                .iter()
                .find(|(label, _)| *label == current)
                .map(|s| s.1)
                .unwrap_or(0.0);
            return Ok(LocationEstimate {
                room_label: current.to_string(),
                confidence: held.clamp(0.0, 1.0),
                timestamp,
            });
        }
    }

    Ok(LocationEstimate {
        room_label: candidate.to_string(),
        confidence: top.clamp(0.0, 1.0),
        timestamp,
    })
}
