use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Room, RoomMap, SpatialError, ROOM_MAP_VERSION};
use crate::embedding::EmbeddingVector;
use crate::providers::mock::fnv1a;
use crate::store::cosine;
use crate::text::normalize_label;

const MAX_CENTROIDS: usize = 3;
const FRAMES_PER_CENTROID: usize = 20;
const KMEANS_ITERATIONS: usize = 25;

/// The frames of a walkthrough between one spoken label and the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSegment {
    pub label: String,
    pub frame_embeddings: Vec<EmbeddingVector>,
    /// Seconds into the walkthrough.
    pub start: f64,
    pub end: f64,
}

/// Cut a walkthrough into one segment per label event. Frames before the
/// first label are dropped; the last segment runs to the final frame.
pub fn segment_walkthrough(
    frames: &[(f64, EmbeddingVector)],
    label_events: &[(f64, String)],
) -> Result<Vec<CalibrationSegment>, SpatialError> {
    if label_events.is_empty() {
        return Err(SpatialError::NoLabels);
    }
    if label_events.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(SpatialError::LabelsOutOfOrder);
    }
    if frames.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(SpatialError::FramesOutOfOrder);
    }
    let (first_t, last_t) = match (frames.first(), frames.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(SpatialError::EmptySegment(normalize_label(&label_events[0].1))),
    };
    if let Some((t, _)) = label_events.iter().find(|(t, _)| *t < first_t || *t > last_t) {
        return Err(SpatialError::LabelOutOfRange(*t));
    }

    let mut segments = Vec::with_capacity(label_events.len());
    for (i, (start, raw_label)) in label_events.iter().enumerate() {
        let label = normalize_label(raw_label);
        if label.is_empty() {
            return Err(SpatialError::EmptyLabel);
        }
        let next = label_events.get(i + 1).map(|(t, _)| *t);
        let frame_embeddings: Vec<EmbeddingVector> = frames
            .iter()
            .filter(|(t, _)| *t >= *start && next.is_none_or(|n| *t < n))
            .map(|(_, e)| e.clone())
            .collect();
        if frame_embeddings.is_empty() {
            return Err(SpatialError::EmptySegment(label));
        }
        segments.push(CalibrationSegment {
            label,
            frame_embeddings,
            start: *start,
            end: next.unwrap_or(last_t),
        });
    }
    Ok(segments)
}

/// Number of centroids kept for a segment of `frames` embeddings.
pub fn centroid_count(frames: usize) -> usize {
    MAX_CENTROIDS.min(frames.div_ceil(FRAMES_PER_CENTROID)).max(1)
}

fn sim(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    cosine(a, b).unwrap_or(-1.0)
}

/// Spherical k-means with deterministic farthest-point seeding. Returns
/// unit-length centroids.
pub fn spherical_kmeans(points: &[EmbeddingVector], k: usize) -> Vec<EmbeddingVector> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let k = k.min(points.len());
    let mut centers: Vec<EmbeddingVector> = vec![points[0].clone().normalized()];
    while centers.len() < k {
        let farthest = points
            .iter()
            .map(|p| centers.iter().map(|c| sim(p, c)).fold(f64::NEG_INFINITY, f64::max))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .expect("points is non-empty");
        centers.push(points[farthest].clone().normalized());
    }

    let dim = points[0].dim();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..KMEANS_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = centers
                .iter()
                .enumerate()
                .max_by(|a, b| sim(p, a.1).total_cmp(&sim(p, b.1)).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
                .expect("k >= 1");
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (j, center) in centers.iter_mut().enumerate() {
            let mut sum = vec![0.0; dim];
            let mut members = 0;
            for (p, _) in points.iter().zip(&assignment).filter(|(_, a)| **a == j) {
                for (s, v) in sum.iter_mut().zip(p.values()) {
                    *s += v;
                }
                members += 1;
            }
            if members == 0 {
                continue;
            }
            if let Ok(mean) = EmbeddingVector::new(sum) {
                if mean.norm() > 0.0 {
                    *center = mean.normalized();
                }
            }
        }
    }
    centers
}

/// Build the room map: one room per distinct label (first-visit order),
/// centroids clustered per segment, and an edge between every pair of
/// distinct labels visited consecutively.
pub fn build_room_map(segments: &[CalibrationSegment], created_at: DateTime<Utc>) -> Result<RoomMap, SpatialError> {
    if segments.is_empty() {
        return Err(SpatialError::EmptySegments);
    }
    let dim = segments[0]
        .frame_embeddings
        .first()
        .map(EmbeddingVector::dim)
        .ok_or_else(|| SpatialError::EmptySegment(segments[0].label.clone()))?;

    let mut rooms: Vec<Room> = Vec::new();
    let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut previous: Option<String> = None;
    for segment in segments {
        let label = normalize_label(&segment.label);
        if label.is_empty() {
            return Err(SpatialError::EmptyLabel);
        }
        if segment.frame_embeddings.is_empty() {
            return Err(SpatialError::EmptySegment(label));
        }
        if let Some(bad) = segment.frame_embeddings.iter().find(|e| e.dim() != dim) {
            return Err(SpatialError::DimMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        let centroids = spherical_kmeans(
            &segment.frame_embeddings,
            centroid_count(segment.frame_embeddings.len()),
        );
        match rooms.iter_mut().find(|r| r.label == label) {
            Some(room) => room.centroids.extend(centroids),
            None => rooms.push(Room {
                label: label.clone(),
                centroids,
            }),
        }
        if let Some(prev) = previous.as_ref().filter(|p| **p != label) {
            adjacency.entry(prev.clone()).or_default().insert(label.clone());
            adjacency.entry(label.clone()).or_default().insert(prev.clone());
        }
        previous = Some(label);
    }

    let mut fingerprint = Vec::new();
    for room in &rooms {
        fingerprint.extend_from_slice(room.label.as_bytes());
        for c in &room.centroids {
            for v in c.values() {
                fingerprint.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let calibration_id = format!("cal-{:016x}", fnv1a(0, &[&fingerprint, created_at.to_rfc3339().as_bytes()]));

    let map = RoomMap {
        version: ROOM_MAP_VERSION,
        calibration_id,
        created_at,
        rooms,
        adjacency,
    };
    map.validate()?;
    Ok(map)
}
