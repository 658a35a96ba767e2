//! Per-batch scripts replayed by the mock hand detector and VLM.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Injected failure for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchFault {
    /// The hand detector errors (the batch is gated out).
    DetectorError,
    /// The VLM is unreachable for this batch.
    VlmUnavailable,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub hands: Option<bool>,
    /// Raw VLM reply, validated at the provider boundary.
    pub vlm: Option<Value>,
    pub fault: Option<BatchFault>,
}

/// Shared, thread-safe map from batch id to its script entry.
#[derive(Debug, Clone, Default)]
pub struct ScriptBook {
    entries: Arc<RwLock<HashMap<String, ScriptEntry>>>,
}

impl ScriptBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, batch_id: impl Into<String>, entry: ScriptEntry) {
        self.entries
            .write()
            .expect("script book poisoned")
            .insert(batch_id.into(), entry);
    }

    pub fn get(&self, batch_id: &str) -> Option<ScriptEntry> {
        self.entries
            .read()
            .expect("script book poisoned")
            .get(batch_id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("script book poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
