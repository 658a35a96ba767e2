//! JSON Lines diary format. One record per line, each tagged with the
//! schema version; the object index is rebuilt on load.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActivitiesDb, ActivityRecord, StoreError};

pub const DIARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiaryLine {
    pub schema_version: u32,
    #[serde(flatten)]
    pub record: ActivityRecord,
}

impl DiaryLine {
    pub fn new(record: ActivityRecord) -> Self {
        Self {
            schema_version: DIARY_SCHEMA_VERSION,
            record,
        }
    }

    pub fn to_line(record: &ActivityRecord) -> String {
        #[derive(Serialize)]
        struct Borrowed<'a> {
            schema_version: u32,
            #[serde(flatten)]
            record: &'a ActivityRecord,
        }
        serde_json::to_string(&Borrowed {
            schema_version: DIARY_SCHEMA_VERSION,
            record,
        })
        .expect("activity records always serialize")
    }
}

impl ActivitiesDb {
    /// Serialize every record as JSON Lines.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&DiaryLine::to_line(record));
            out.push('\n');
        }
        out
    }

    /// Rebuild a database from a JSON Lines diary. Blank lines are skipped.
    pub fn from_jsonl(reader: impl BufRead, dim: usize) -> Result<Self, StoreError> {
        let mut db = ActivitiesDb::new(dim);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: DiaryLine =
                serde_json::from_str(&line).map_err(|source| StoreError::Parse { line: idx + 1, source })?;
            if parsed.schema_version != DIARY_SCHEMA_VERSION {
                return Err(StoreError::UnsupportedSchema(parsed.schema_version));
            }
            db.push(parsed.record)?;
        }
        Ok(db)
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self, StoreError> {
        if !path.exists() {
            return Ok(ActivitiesDb::new(dim));
        }
        Self::from_jsonl(BufReader::new(File::open(path)?), dim)
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(self.to_jsonl().as_bytes())?;
        file.flush()?;
        Ok(())
    }
}

/// Append-only writer for the on-device diary file.
#[derive(Debug)]
pub struct DiaryWriter {
    file: File,
}

impl DiaryWriter {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, record: &ActivityRecord) -> Result<(), StoreError> {
        let mut line = DiaryLine::to_line(record);
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;
    use crate::store::NewRecord;
    use chrono::{TimeZone, Utc};

    fn sample_db() -> ActivitiesDb {
        let mut db = ActivitiesDb::new(3);
        for (i, obj) in ["keys", "cup", "keys"].iter().enumerate() {
            db.insert(NewRecord {
                session_id: "s1".into(),
                timestamp: Utc.with_ymd_and_hms(2024, 5, 2, 14, i as u32, 0).unwrap(),
                location: "kitchen".into(),
                activity: format!("holding {obj}"),
                objects_in_hand: vec![obj.to_string()],
                background: "marble counter".into(),
                embedding: EmbeddingVector::new(vec![1.0, i as f64, 0.5]).unwrap(),
                source_batch: format!("b{i}"),
            })
            .unwrap();
        }
        db
    }

    #[test]
    fn jsonl_round_trip_rebuilds_index() {
        let db = sample_db();
        let text = db.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.starts_with("{\"schema_version\":1,")));
        let back = ActivitiesDb::from_jsonl(text.as_bytes(), 3).unwrap();
        assert_eq!(back.records(), db.records());
        assert_eq!(back.indexed_ids("keys"), db.indexed_ids("keys"));
        assert_eq!(back.to_jsonl(), text);
    }

    #[test]
    fn rejects_unknown_schema_and_garbage() {
        let text = sample_db().to_jsonl().replace("\"schema_version\":1", "\"schema_version\":9");
        assert!(matches!(
            ActivitiesDb::from_jsonl(text.as_bytes(), 3),
            Err(StoreError::UnsupportedSchema(9))
        ));
        assert!(matches!(
            ActivitiesDb::from_jsonl("not json\n".as_bytes(), 3),
            Err(StoreError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn writer_appends_and_load_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diary.jsonl");
        let db = sample_db();
        let mut writer = DiaryWriter::open(&path).unwrap();
        for r in db.records() {
            writer.append(r).unwrap();
        }
        let loaded = ActivitiesDb::load(&path, 3).unwrap();
        assert_eq!(loaded.records(), db.records());
        assert!(ActivitiesDb::load(&dir.path().join("missing.jsonl"), 3).unwrap().is_empty());
    }
}
