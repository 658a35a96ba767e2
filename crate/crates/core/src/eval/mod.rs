//! Evaluation harness: scenario replay, trial classification, accuracy and
//! latency tables, and simulated searchers.

mod classify;
mod latency;
mod replay;
mod search;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Walkthrough};
use crate::ingest::{read_batch_lines, BatchLine, IngestError};
use crate::spatial::{RoomMap, SpatialError};
use crate::text::{normalize_label, normalize_object};

pub use classify::{
    accuracy_table, classify_trial, rounded_percent, AccuracyCell, AccuracyColumn, AccuracyTable, Denominators,
    TrialAnnotation, TrialClass,
};
pub use latency::{latency_report, BatchTiming, LatencyReport, StageStats, TimingLog};
pub use replay::{replay, ReplayReport, ReplaySettings, TrialResult};
pub use search::{
    monte_carlo, path_length, placements, run_search_experiment, simulate_search, simulate_trial, AgentModel,
    ErrorProfile, Placement, SearchComparison, SearchConfig, SearchStrategy, SearchSummary, SearchTrace,
};

/// The default object set of the bundled household scenario.
pub const DEFAULT_OBJECTS: [&str; 20] = [
    "folder",
    "cup",
    "phone",
    "bottle",
    "medication",
    "glasses",
    "headphones",
    "book",
    "charger",
    "remote",
    "ID card",
    "ring",
    "wallet",
    "watch",
    "magnifying glass",
    "tape",
    "scissors",
    "ruler",
    "mouse",
    "keys",
];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
    #[error("denominator is zero")]
    ZeroDenominator,
    #[error("count {count} exceeds total {total}")]
    CountExceedsTotal { count: usize, total: usize },
    #[error("no timed interactions")]
    NoData,
    #[error("invalid error profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// The person searches unaided.
    Baseline,
    /// The person asks the assistant.
    MemPal,
    /// The person is shown the last tiled image of the object.
    Visual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub object: String,
    pub truth_location: String,
    #[serde(default)]
    pub truth_background: String,
    pub condition: Condition,
    /// Spoken query; defaults to "Pal, where is my {object}?".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    /// When the person asks; defaults to a minute apart after the last batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asked_at: Option<DateTime<Utc>>,
    /// Capture time of the batch in which the object was put down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placed_at: Option<DateTime<Utc>>,
}

impl Trial {
    pub fn spoken_query(&self) -> String {
        self.query
            .clone()
            .unwrap_or_else(|| format!("Pal, where is my {}?", self.object))
    }
}

/// How the scenario describes the home.
#[derive(Debug, Clone, PartialEq)]
pub enum Home {
    Walkthrough(Walkthrough),
    RoomMap(RoomMap),
}

/// The scenario document on disk. Paths are relative to the document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub objects: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walkthrough: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_map: Option<PathBuf>,
    pub batches: PathBuf,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub objects: Vec<String>,
    pub home: Home,
    pub batches: Vec<BatchLine>,
    pub trials: Vec<Trial>,
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    serde_json::from_str(&read(path)?).map_err(|source| EvalError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl Scenario {
    /// Load and validate a scenario document and the files it references.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let file: ScenarioFile = parse(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let home = match (&file.walkthrough, &file.room_map) {
            (Some(w), None) => Home::Walkthrough(parse(&base.join(w))?),
            (None, Some(m)) => Home::RoomMap(RoomMap::from_json(&read(&base.join(m))?)?),
            _ => {
                return Err(EvalError::ScenarioInvalid(
                    "exactly one of `walkthrough` and `room_map` is required".into(),
                ))
            }
        };
        let batches_path = base.join(&file.batches);
        let reader = File::open(&batches_path).map_err(|source| EvalError::Io {
            path: batches_path.clone(),
            source,
        })?;
        let scenario = Self {
            name: file.name,
            objects: file.objects,
            home,
            batches: read_batch_lines(BufReader::new(reader))?,
            trials: file.trials,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Room labels of the home, in calibration order.
    pub fn room_labels(&self) -> Vec<String> {
        match &self.home {
            Home::RoomMap(map) => map.labels(),
            Home::Walkthrough(w) => {
                let mut seen = Vec::new();
                for label in w.labels.iter().map(|l| normalize_label(&l.label)) {
                    if !seen.contains(&label) {
                        seen.push(label);
                    }
                }
                seen
            }
        }
    }

    pub fn last_batch_time(&self) -> Option<DateTime<Utc>> {
        self.batches.iter().map(|b| b.t).max()
    }

    /// When trial `index` is asked.
    pub fn asked_at(&self, index: usize) -> DateTime<Utc> {
        let trial = &self.trials[index];
        trial.asked_at.unwrap_or_else(|| {
            let base = self.last_batch_time().unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
            base + chrono::Duration::minutes(index as i64 + 1)
        })
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |msg: String| Err(EvalError::ScenarioInvalid(msg));
        let objects: BTreeSet<String> = self.objects.iter().map(|o| normalize_object(o)).collect();
        let rooms = self.room_labels();
        let last_batch = self.last_batch_time();
        for (i, trial) in self.trials.iter().enumerate() {
            if !objects.contains(&normalize_object(&trial.object)) {
                return invalid(format!("trial {i}: object {:?} is not in the object list", trial.object));
            }
            if !rooms.contains(&normalize_label(&trial.truth_location)) {
                return invalid(format!("trial {i}: unknown room {:?}", trial.truth_location));
            }
            if let (Some(asked), Some(last)) = (trial.asked_at, last_batch) {
                if asked <= last {
                    return invalid(format!("trial {i} is asked at {asked}, before the last batch at {last}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(object: &str, room: &str) -> Trial {
        Trial {
            object: object.into(),
            truth_location: room.into(),
            truth_background: String::new(),
            condition: Condition::MemPal,
            query: None,
            asked_at: None,
            placed_at: None,
        }
    }

    fn scenario(trials: Vec<Trial>) -> Scenario {
        Scenario {
            name: "t".into(),
            objects: vec!["ID card".into(), "keys".into()],
            home: Home::Walkthrough(Walkthrough {
                started_at: DateTime::<Utc>::UNIX_EPOCH,
                frames: vec![],
                labels: vec![
                    crate::engine::LabelEvent {
                        t: 0.0,
                        label: "Kitchen".into(),
                    },
                    crate::engine::LabelEvent {
                        t: 1.0,
                        label: "hall".into(),
                    },
                    crate::engine::LabelEvent {
                        t: 2.0,
                        label: "kitchen".into(),
                    },
                ],
            }),
            batches: vec![],
            trials,
        }
    }

    #[test]
    fn validation() {
        let s = scenario(vec![trial("id card", "Kitchen"), trial("keys", "hall")]);
        assert_eq!(s.room_labels(), ["kitchen", "hall"]);
        s.validate().unwrap();
        assert!(scenario(vec![trial("ring", "hall")]).validate().is_err());
        assert!(scenario(vec![trial("keys", "attic")]).validate().is_err());
        assert_eq!(s.trials[0].spoken_query(), "Pal, where is my id card?");
    }
}
