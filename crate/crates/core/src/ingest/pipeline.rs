use std::collections::HashMap;
use std::time::Duration;

use chrono::{DateTime, Utc};
use image::RgbImage;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{tile_frames, FrameBatch, IngestError, MAX_TILED_FRAMES};
use crate::clock::{serde_secs, Clock};
use crate::providers::{HandDetector, ProviderError, Providers, VlmDescription, VlmRequest, DEFAULT_VLM_PROMPT};
use crate::spatial::{localize, LocalizationParams, LocationEstimate, RoomMap};
use crate::store::{ActivitiesDb, NewRecord, RecordId};

/// Wall time spent in each stage of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    #[serde(with = "serde_secs")]
    pub preprocess: Duration,
    #[serde(with = "serde_secs")]
    pub location: Duration,
    #[serde(with = "serde_secs")]
    pub vlm: Duration,
    #[serde(with = "serde_secs")]
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Description prompt; `{previous_activity}` is substituted.
    pub prompt: String,
    pub localization: LocalizationParams,
    /// Simulated camera preprocessing time per batch.
    #[serde(with = "serde_secs")]
    pub preprocess_latency: Duration,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            prompt: DEFAULT_VLM_PROMPT.to_string(),
            localization: LocalizationParams::default(),
            preprocess_latency: Duration::ZERO,
        }
    }
}

/// Everything [`process_batch`] reads besides the batch itself.
#[derive(Clone, Copy)]
pub struct IngestContext<'a> {
    pub providers: &'a Providers,
    pub clock: &'a dyn Clock,
    pub map: &'a RoomMap,
    pub config: &'a IngestConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// No hands visible (or the detector failed).
    GatedOut,
    VlmUnavailable,
    MalformedOutput,
    EmbedFailed,
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub batch_id: String,
    pub session_id: String,
    pub estimate: LocationEstimate,
    pub record: Option<NewRecord>,
    pub timings: StageTimings,
    pub hands: bool,
    pub detector_failed: bool,
    pub skipped: Option<SkipReason>,
    pub tiled: Option<RgbImage>,
}

/// Counters over everything an [`Ingestor`] has processed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub batches: usize,
    pub estimates: usize,
    pub gated_in: usize,
    pub gated_out: usize,
    pub detector_errors: usize,
    pub records: usize,
    pub vlm_unavailable: usize,
    pub malformed: usize,
    pub embed_failed: usize,
}

/// Text embedded for every record; it carries all four metadata fields.
pub fn canonical_text(description: &VlmDescription, location: &str) -> String {
    format!(
        "{} | objects: {} | at {} | near {}",
        description.activity,
        description.objects_in_hand.join(","),
        location,
        description.background
    )
}

fn detect(batch: &FrameBatch, detector: &dyn HandDetector) -> (bool, bool) {
    match detector.hands_present(batch) {
        Ok(hands) => (hands, false),
        Err(err) => {
            warn!(batch = %batch.batch_id, %err, "hand detector failed; treating batch as hands-free");
            (false, true)
        }
    }
}

/// Whether the batch shows hands. Detector failures count as no hands.
pub fn gate_batch(batch: &FrameBatch, detector: &dyn HandDetector) -> bool {
    detect(batch, detector).0
}

/// Evenly spaced subset of at most [`MAX_TILED_FRAMES`] indices.
fn tile_indices(n: usize) -> Vec<usize> {
    if n <= MAX_TILED_FRAMES {
        return (0..n).collect();
    }
    (0..MAX_TILED_FRAMES).map(|i| i * n / MAX_TILED_FRAMES).collect()
}

/// Run one batch through localization, gating and description.
///
/// The location estimate is always produced. A record is produced only when
/// hands are present and the providers succeed; provider failures skip the
/// record instead of failing the batch.
pub fn process_batch(
    batch: &FrameBatch,
    ctx: IngestContext<'_>,
    previous: Option<&LocationEstimate>,
    previous_activity: &str,
) -> Result<BatchOutcome, IngestError> {
    let clock = ctx.clock;
    let start = clock.now();
    let first = batch
        .frames
        .first()
        .ok_or_else(|| IngestError::NoFrames(batch.batch_id.clone()))?;

    if !ctx.config.preprocess_latency.is_zero() {
        clock.sleep(ctx.config.preprocess_latency);
    }
    let mut images = Vec::new();
    for i in tile_indices(batch.frames.len()) {
        if let Some(image) = batch.frames[i].render()? {
            images.push(image);
        }
    }
    let tiled = if images.is_empty() { None } else { Some(tile_frames(&images)?) };
    let preprocess = clock.elapsed_since(start);

    let location_start = clock.now();
    let frame_embedding = ctx.providers.frames.embed_frame(first)?;
    let estimate = localize(&frame_embedding, ctx.map, previous, &ctx.config.localization, batch.captured_at)?;
    let location = clock.elapsed_since(location_start);

    let (hands, detector_failed) = detect(batch, ctx.providers.hands.as_ref());
    let mut outcome = BatchOutcome {
        batch_id: batch.batch_id.clone(),
        session_id: batch.session_id.clone(),
        estimate,
        record: None,
        timings: StageTimings {
            preprocess,
            location,
            ..StageTimings::default()
        },
        hands,
        detector_failed,
        skipped: None,
        tiled,
    };
    if !hands {
        outcome.skipped = Some(SkipReason::GatedOut);
        outcome.timings.total = clock.elapsed_since(start);
        return Ok(outcome);
    }

    let vlm_start = clock.now();
    let previous_text = if previous_activity.is_empty() { "none" } else { previous_activity };
    let prompt = ctx.config.prompt.replace("{previous_activity}", previous_text);
    let described = ctx.providers.vlm.describe(&VlmRequest {
        batch_id: &batch.batch_id,
        tiled_image: outcome.tiled.as_ref(),
        previous_activity,
        prompt: &prompt,
    });
    outcome.timings.vlm = clock.elapsed_since(vlm_start);

    match described {
        Ok(description) => {
            let text = canonical_text(&description, &outcome.estimate.room_label);
            match ctx.providers.text.embed_text(&text) {
                Ok(embedding) => {
                    outcome.record = Some(NewRecord {
                        session_id: batch.session_id.clone(),
                        timestamp: batch.captured_at,
                        location: outcome.estimate.room_label.clone(),
                        activity: description.activity,
                        objects_in_hand: description.objects_in_hand,
                        background: description.background,
                        embedding,
                        source_batch: batch.batch_id.clone(),
                    });
                }
                Err(err) => {
                    warn!(batch = %batch.batch_id, %err, "embedding failed; record skipped");
                    outcome.skipped = Some(SkipReason::EmbedFailed);
                }
            }
        }
        Err(err @ ProviderError::MalformedOutput { .. }) => {
            warn!(batch = %batch.batch_id, %err, "dropping batch with malformed description");
            outcome.skipped = Some(SkipReason::MalformedOutput);
        }
        Err(err) => {
            warn!(batch = %batch.batch_id, %err, "description unavailable; record skipped");
            outcome.skipped = Some(SkipReason::VlmUnavailable);
        }
    }
    outcome.timings.total = clock.elapsed_since(start);
    Ok(outcome)
}

#[derive(Debug, Clone, Default)]
struct SessionCursor {
    last_captured: Option<DateTime<Utc>>,
    previous: Option<LocationEstimate>,
}

/// Serial per-session ingest: ordering checks, localization history,
/// previous-activity context and insertion into the diary.
#[derive(Debug, Clone, Default)]
pub struct Ingestor {
    config: IngestConfig,
    sessions: HashMap<String, SessionCursor>,
    stats: IngestStats,
}

impl Ingestor {
    pub fn new(config: IngestConfig) -> Self {
        Self {
            config,
            sessions: HashMap::new(),
            stats: IngestStats::default(),
        }
    }

    pub fn config(&self) -> &IngestConfig {
        &self.config
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// Forget localization history (after recalibration).
    pub fn reset_locations(&mut self) {
        for cursor in self.sessions.values_mut() {
            cursor.previous = None;
        }
    }

    /// Process one batch and insert its record, if any.
    pub fn ingest(
        &mut self,
        batch: &FrameBatch,
        providers: &Providers,
        clock: &dyn Clock,
        map: &RoomMap,
        db: &mut ActivitiesDb,
    ) -> Result<(BatchOutcome, Option<RecordId>), IngestError> {
        let cursor = self.sessions.entry(batch.session_id.clone()).or_default();
        let last = cursor.last_captured.max(db.session_last(&batch.session_id));
        if let Some(last) = last.filter(|last| batch.captured_at <= *last) {
            return Err(IngestError::OutOfOrderTimestamp {
                batch: batch.batch_id.clone(),
                session: batch.session_id.clone(),
                captured_at: batch.captured_at,
                last,
            });
        }
        let previous_activity = db
            .latest_in_session(&batch.session_id)
            .map(|r| r.activity.clone())
            .unwrap_or_default();
        let ctx = IngestContext {
            providers,
            clock,
            map,
            config: &self.config,
        };
        let outcome = process_batch(batch, ctx, cursor.previous.as_ref(), &previous_activity)?;
        cursor.last_captured = Some(batch.captured_at);
        cursor.previous = Some(outcome.estimate.clone());

        self.stats.batches += 1;
        self.stats.estimates += 1;
        match outcome.skipped {
            Some(SkipReason::GatedOut) => self.stats.gated_out += 1,
            Some(SkipReason::VlmUnavailable) => self.stats.vlm_unavailable += 1,
            Some(SkipReason::MalformedOutput) => self.stats.malformed += 1,
            Some(SkipReason::EmbedFailed) => self.stats.embed_failed += 1,
            None => {}
        }
        if outcome.hands {
            self.stats.gated_in += 1;
        }
        if outcome.detector_failed {
            self.stats.detector_errors += 1;
        }
        let id = match &outcome.record {
            Some(record) => {
                let id = db.insert(record.clone())?;
                self.stats.records += 1;
                debug!(batch = %batch.batch_id, record = %id, "record inserted");
                Some(id)
            }
            None => None,
        };
        Ok((outcome, id))
    }
}
