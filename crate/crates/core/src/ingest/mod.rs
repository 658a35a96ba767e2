//! Frame-batch ingestion: hand gating, frame tiling, localization, VLM
//! description and diary insertion, with per-stage timings.

mod pipeline;
mod tile;
mod wire;

use std::path::PathBuf;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use chrono::{DateTime, Utc};
use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::providers::mock::fnv1a;
use crate::providers::ProviderError;
use crate::spatial::SpatialError;
use crate::store::StoreError;
use crate::text::normalize_label;

pub use pipeline::{
    canonical_text, gate_batch, process_batch, BatchOutcome, IngestConfig, IngestContext, IngestStats, Ingestor,
    SkipReason, StageTimings,
};
pub use tile::{grid_shape, tile_frames, MAX_TILED_FRAMES};
pub use wire::{batch_by_cadence, read_batch_lines, read_stream_frames, BatchLine, StreamFrame};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("batch {0} has no frames")]
    NoFrames(String),
    #[error("cannot tile {0} frames (at most {MAX_TILED_FRAMES})")]
    TooManyFrames(usize),
    #[error("batch {batch} for session {session} at {captured_at} is not after {last}")]
    OutOfOrderTimestamp {
        batch: String,
        session: String,
        captured_at: DateTime<Utc>,
        last: DateTime<Utc>,
    },
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("frame image: {0}")]
    Image(String),
    #[error("batch line {line}: {detail}")]
    BadLine { line: usize, detail: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Weighted mix with a second room, for frames taken across a doorway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBlend {
    pub room: String,
    pub weight: f64,
}

/// Stand-in for real pixels in scripted scenarios: which room the camera
/// sees plus a per-frame variation index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub room: String,
    #[serde(default)]
    pub variant: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blend: Option<SceneBlend>,
}

/// One camera frame. Any of the representations may be present; the frame
/// embedder picks the first it understands.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SyntheticScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub png_base64: Option<String>,
}

/// Edge length of the placeholder image drawn for synthetic scenes.
const SCENE_SWATCH: u32 = 16;

impl Frame {
    pub fn from_embedding(embedding: EmbeddingVector) -> Self {
        Self {
            embedding: Some(embedding),
            ..Self::default()
        }
    }

    pub fn from_scene(room: impl Into<String>, variant: u64) -> Self {
        Self {
            scene: Some(SyntheticScene {
                room: room.into(),
                variant,
                blend: None,
            }),
            ..Self::default()
        }
    }

    /// Decode the attached pixels, if any.
    pub fn decode_image(&self) -> Result<Option<RgbImage>, IngestError> {
        let bytes = match (&self.png_base64, &self.image_path) {
            (Some(b64), _) => BASE64.decode(b64).map_err(|e| IngestError::Image(e.to_string()))?,
            (None, Some(path)) => std::fs::read(path)?,
            (None, None) => return Ok(None),
        };
        let image = image::load_from_memory(&bytes).map_err(|e| IngestError::Image(e.to_string()))?;
        Ok(Some(image.to_rgb8()))
    }

    /// Pixels for tiling: decoded image, or a flat swatch colored by the
    /// synthetic scene. Embedding-only frames have none.
    pub fn render(&self) -> Result<Option<RgbImage>, IngestError> {
        if let Some(image) = self.decode_image()? {
            return Ok(Some(image));
        }
        Ok(self.scene.as_ref().map(|scene| {
            let h = fnv1a(0, &[b"swatch", normalize_label(&scene.room).as_bytes(), &scene.variant.to_le_bytes()]);
            let [r, g, b, ..] = h.to_le_bytes();
            RgbImage::from_pixel(SCENE_SWATCH, SCENE_SWATCH, Rgb([r, g, b]))
        }))
    }
}

/// A short run of consecutive frames sent together for description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBatch {
    pub batch_id: String,
    pub session_id: String,
    pub captured_at: DateTime<Utc>,
    pub frames: Vec<Frame>,
}
