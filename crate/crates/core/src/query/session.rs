use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Answer, Intent};
use crate::store::RecordId;

pub const DEFAULT_SESSION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub query: String,
    pub answer: String,
    pub intent: Intent,
    pub t: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_record: Option<RecordId>,
    /// Object the turn was about, after follow-ups inherit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

impl Turn {
    pub fn new(intent: Intent, answer: &Answer, object: Option<String>, t: DateTime<Utc>) -> Self {
        Self {
            query: intent.raw_text.clone(),
            answer: answer.text.clone(),
            intent,
            t,
            supporting_record: answer.supporting_record,
            object,
        }
    }

    #[cfg(test)]
    pub(crate) fn for_test(query: &str, answer: &str) -> Self {
        Self {
            query: query.into(),
            answer: answer.into(),
            intent: Intent {
                category: super::IntentCategory::ObjectLocation,
                object_phrase: Some("keys".into()),
                raw_text: query.into(),
                wakeword_present: true,
            },
            t: DateTime::<Utc>::UNIX_EPOCH,
            supporting_record: None,
            object: Some("keys".into()),
        }
    }
}

/// Bounded conversation memory for one user session. The oldest turn is
/// evicted once the cap is reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    cap: usize,
    turns: VecDeque<Turn>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, cap: usize) -> Self {
        Self {
            session_id: session_id.into(),
            cap: cap.max(1),
            turns: VecDeque::new(),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn turns(&self) -> impl DoubleEndedIterator<Item = &Turn> + ExactSizeIterator {
        self.turns.iter()
    }

    pub fn last(&self) -> Option<&Turn> {
        self.turns.back()
    }

    /// Most recent object any turn was about.
    pub fn last_object(&self) -> Option<&str> {
        self.turns.iter().rev().find_map(|t| t.object.as_deref())
    }

    pub fn push_turn(&mut self, turn: Turn) {
        while self.turns.len() >= self.cap {
            self.turns.pop_front();
        }
        self.turns.push_back(turn);
    }

    /// Recent turns as prompt text, oldest first.
    pub fn transcript(&self, max_turns: usize) -> String {
        let skip = self.turns.len().saturating_sub(max_turns);
        let mut out = String::new();
        for turn in self.turns.iter().skip(skip) {
            out.push_str(&format!("User: {}\nPal: {}\n", turn.query, turn.answer));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_evicts_oldest() {
        let mut s = ChatSession::new("s", 3);
        for i in 0..5 {
            s.push_turn(Turn::for_test(&format!("q{i}"), "a"));
        }
        assert_eq!(s.len(), 3);
        let queries: Vec<_> = s.turns().map(|t| t.query.as_str()).collect();
        assert_eq!(queries, ["q2", "q3", "q4"]);
        assert_eq!(s.transcript(1), "User: q4\nPal: a\n");
    }
}
