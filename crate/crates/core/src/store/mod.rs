//! The activities database: an append-only diary of [`ActivityRecord`]s with
//! an object-metadata index and exhaustive cosine top-k retrieval.

mod persist;
mod similarity;

use std::cmp::Ordering;
use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::text::{normalize_object, normalize_objects};

pub use persist::{DiaryLine, DiaryWriter, DIARY_SCHEMA_VERSION};
pub use similarity::{cosine, SimilarityError};

/// Default number of documents retrieved for RAG answers.
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("embedding dimension mismatch: store holds {expected}, record has {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("record for session {session} at {timestamp} is not after the session's last record at {last}")]
    OutOfOrderTimestamp {
        session: String,
        timestamp: DateTime<Utc>,
        last: DateTime<Utc>,
    },
    #[error("duplicate or non-increasing record id {0}")]
    BadRecordId(RecordId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("unsupported diary schema version {0}")]
    UnsupportedSchema(u32),
    #[error("diary line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub u64);

impl std::fmt::Display for RecordId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One diary entry. Immutable once inserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRecord {
    pub record_id: RecordId,
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
    pub location: String,
    pub activity: String,
    pub objects_in_hand: Vec<String>,
    pub background: String,
    pub embedding: EmbeddingVector,
    pub source_batch: String,
}

impl ActivityRecord {
    pub fn mentions(&self, object: &str) -> bool {
        self.objects_in_hand.iter().any(|o| o == object)
    }
}

/// A record before the store assigns its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewRecord {
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
    pub location: String,
    pub activity: String,
    pub objects_in_hand: Vec<String>,
    pub background: String,
    pub embedding: EmbeddingVector,
    pub source_batch: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalResult<'a> {
    pub record: &'a ActivityRecord,
    pub score: f64,
}

/// Ordering used for retrieval results: score descending, then newer first.
pub fn retrieval_order(a: (f64, &ActivityRecord), b: (f64, &ActivityRecord)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.timestamp.cmp(&a.1.timestamp))
        .then_with(|| b.1.record_id.cmp(&a.1.record_id))
}

#[derive(Debug, Clone)]
pub struct ActivitiesDb {
    dim: usize,
    records: Vec<ActivityRecord>,
    object_index: HashMap<String, Vec<RecordId>>,
    session_last: HashMap<String, DateTime<Utc>>,
}

impl ActivitiesDb {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: Vec::new(),
            object_index: HashMap::new(),
            session_last: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ActivityRecord] {
        &self.records
    }

    pub fn get(&self, id: RecordId) -> Option<&ActivityRecord> {
        let idx = usize::try_from(id.0).ok()?.checked_sub(1)?;
        self.records.get(idx).filter(|r| r.record_id == id)
    }

    pub fn insert(&mut self, record: NewRecord) -> Result<RecordId, StoreError> {
        let id = RecordId(self.records.len() as u64 + 1);
        self.push(ActivityRecord {
            record_id: id,
            session_id: record.session_id,
            timestamp: record.timestamp,
            location: record.location,
            activity: record.activity,
            objects_in_hand: record.objects_in_hand,
            background: record.background,
            embedding: record.embedding,
            source_batch: record.source_batch,
        })?;
        Ok(id)
    }

    /// Append a record that already carries its id (diary reload / import).
    pub(crate) fn push(&mut self, mut record: ActivityRecord) -> Result<(), StoreError> {
        if record.embedding.dim() != self.dim {
            return Err(StoreError::DimMismatch {
                expected: self.dim,
                actual: record.embedding.dim(),
            });
        }
        if record.record_id.0 != self.records.len() as u64 + 1 {
            return Err(StoreError::BadRecordId(record.record_id));
        }
        if let Some(last) = self.session_last.get(&record.session_id) {
            if record.timestamp <= *last {
                return Err(StoreError::OutOfOrderTimestamp {
                    session: record.session_id.clone(),
                    timestamp: record.timestamp,
                    last: *last,
                });
            }
        }
        record.objects_in_hand = normalize_objects(&record.objects_in_hand);
        for object in &record.objects_in_hand {
            self.object_index
                .entry(object.clone())
                .or_default()
                .push(record.record_id);
        }
        self.session_last
            .insert(record.session_id.clone(), record.timestamp);
        self.records.push(record);
        Ok(())
    }

    /// Records whose objects include `object` (after normalization),
    /// oldest first.
    pub fn filter_exact(&self, object: &str) -> Vec<&ActivityRecord> {
        let key = normalize_object(object);
        let mut hits: Vec<&ActivityRecord> = self
            .object_index
            .get(&key)
            .map(|ids| ids.iter().filter_map(|id| self.get(*id)).collect())
            .unwrap_or_default();
        hits.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.record_id.cmp(&b.record_id)));
        hits
    }

    /// Most recent exact match for `object`.
    pub fn last_seen(&self, object: &str) -> Option<&ActivityRecord> {
        self.filter_exact(object).pop()
    }

    /// Exhaustive top-k by cosine similarity.
    pub fn topk(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalResult<'_>>, StoreError> {
        if k == 0 {
            return Err(StoreError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(StoreError::DimMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<RetrievalResult<'_>> = self
            .records
            .iter()
            .map(|record| RetrievalResult {
                record,
                // zero vectors score 0 rather than failing the whole scan
                score: cosine(query, &record.embedding).unwrap_or(0.0),
            })
            .collect();
        let by_rank = |a: &RetrievalResult<'_>, b: &RetrievalResult<'_>| {
            retrieval_order((a.score, a.record), (b.score, b.record))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_rank);
            scored.truncate(k);
        }
        scored.sort_by(by_rank);
        Ok(scored)
    }

    /// Records strictly before `anchor` in time, nearest first.
    pub fn preceding(&self, anchor: &ActivityRecord, n: usize) -> Vec<&ActivityRecord> {
        let mut before: Vec<&ActivityRecord> = self
            .records
            .iter()
            .filter(|r| (r.timestamp, r.record_id) < (anchor.timestamp, anchor.record_id))
            .collect();
        before.sort_by(|a, b| (b.timestamp, b.record_id).cmp(&(a.timestamp, a.record_id)));
        before.truncate(n);
        before
    }

    /// Records with `since <= timestamp < until`, in insertion order.
    pub fn between(&self, since: Option<DateTime<Utc>>, until: Option<DateTime<Utc>>) -> Vec<&ActivityRecord> {
        self.records
            .iter()
            .filter(|r| since.is_none_or(|s| r.timestamp >= s) && until.is_none_or(|u| r.timestamp < u))
            .collect()
    }

    /// Timestamp of the newest record of `session`.
    pub fn session_last(&self, session: &str) -> Option<DateTime<Utc>> {
        self.session_last.get(session).copied()
    }

    /// Newest record of `session`.
    pub fn latest_in_session(&self, session: &str) -> Option<&ActivityRecord> {
        self.records.iter().rev().find(|r| r.session_id == session)
    }

    /// Object index entries, for consistency checks.
    pub fn indexed_ids(&self, object: &str) -> &[RecordId] {
        self.object_index
            .get(&normalize_object(object))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn ts(h: u32, m: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 2, h, m, 0).unwrap()
    }

    fn unit(dim: usize, axis: usize) -> EmbeddingVector {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        EmbeddingVector::new(v).unwrap()
    }

    fn rec(session: &str, t: DateTime<Utc>, objects: &[&str], axis: usize) -> NewRecord {
        NewRecord {
            session_id: session.into(),
            timestamp: t,
            location: "study".into(),
            activity: "holding".into(),
            objects_in_hand: objects.iter().map(|s| s.to_string()).collect(),
            background: "desk".into(),
            embedding: unit(4, axis),
            source_batch: format!("b{}", t.timestamp()),
        }
    }

    #[test]
    fn insert_updates_object_index() {
        let mut db = ActivitiesDb::new(4);
        let id = db.insert(rec("s", ts(14, 14), &["keys"], 0)).unwrap();
        assert_eq!(db.indexed_ids("keys"), &[id]);
        assert_eq!(db.get(id).unwrap().record_id, id);
        assert!(db.get(RecordId(0)).is_none());
        assert!(db.get(RecordId(2)).is_none());
    }

    #[test]
    fn filter_exact_returns_all_matches_chronologically() {
        let mut db = ActivitiesDb::new(4);
        db.insert(rec("s", ts(14, 14), &["cup", "keys"], 0)).unwrap();
        db.insert(rec("s", ts(14, 30), &["wallet"], 1)).unwrap();
        db.insert(rec("s", ts(15, 5), &["keys"], 2)).unwrap();
        let hits = db.filter_exact("keys");
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].timestamp, ts(14, 14));
        assert_eq!(hits[1].timestamp, ts(15, 5));
        assert_eq!(db.last_seen("Keys ").unwrap().timestamp, ts(15, 5));
        assert!(db.filter_exact("ring").is_empty());
        assert_eq!(db.filter_exact("cup").len(), 1);
    }

    #[test]
    fn rejects_wrong_dim_and_out_of_order() {
        let mut db = ActivitiesDb::new(4);
        let mut bad = rec("s", ts(9, 0), &[], 0);
        bad.embedding = EmbeddingVector::new(vec![1.0; 3]).unwrap();
        assert!(matches!(db.insert(bad), Err(StoreError::DimMismatch { expected: 4, actual: 3 })));

        db.insert(rec("s", ts(10, 0), &[], 0)).unwrap();
        assert!(matches!(
            db.insert(rec("s", ts(10, 0), &[], 0)),
            Err(StoreError::OutOfOrderTimestamp { .. })
        ));
        // other sessions keep their own ordering
        db.insert(rec("t", ts(9, 0), &[], 0)).unwrap();
    }

    #[test]
    fn topk_handles_small_db_and_ties() {
        let mut db = ActivitiesDb::new(4);
        db.insert(rec("s", ts(9, 0), &[], 0)).unwrap();
        db.insert(rec("s", ts(9, 5), &[], 1)).unwrap();
        db.insert(rec("s", ts(9, 10), &[], 0)).unwrap();
        let res = db.topk(&unit(4, 0), DEFAULT_TOP_K).unwrap();
        assert_eq!(res.len(), 3);
        // equal scores: newer first
        assert_eq!(res[0].record.timestamp, ts(9, 10));
        assert_eq!(res[1].record.timestamp, ts(9, 0));
        assert!((res[0].score - 1.0).abs() < 1e-12);
        assert!(res[2].score.abs() < 1e-12);
        assert!(matches!(db.topk(&unit(4, 0), 0), Err(StoreError::ZeroK)));
        assert!(matches!(
            db.topk(&EmbeddingVector::new(vec![1.0; 5]).unwrap(), 3),
            Err(StoreError::DimMismatch { .. })
        ));
    }

    #[test]
    fn preceding_is_nearest_first() {
        let mut db = ActivitiesDb::new(4);
        db.insert(rec("s", ts(9, 0), &["a"], 0)).unwrap();
        db.insert(rec("s", ts(9, 5), &["b"], 0)).unwrap();
        let anchor = db.insert(rec("s", ts(9, 10), &["c"], 0)).unwrap();
        let anchor = db.get(anchor).unwrap().clone();
        let before = db.preceding(&anchor, 5);
        assert_eq!(before.len(), 2);
        assert_eq!(before[0].objects_in_hand, vec!["b"]);
    }
}
