use std::borrow::Cow;
use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, FixedOffset, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::intent::{parse_query, parse_query_with_fallback};
use super::{ChatSession, Intent, IntentCategory, Turn, DEFAULT_SESSION_CAP};
use crate::clock::{serde_ms, Clock};
use crate::providers::{Providers, NO_EVIDENCE_SENTINEL};
use crate::spatial::UNKNOWN_ROOM;
use crate::store::{ActivitiesDb, ActivityRecord, RecordId, StoreError, DEFAULT_TOP_K};

/// The reply whenever the diary holds no usable evidence.
pub const NOT_SURE: &str = "I'm not sure.";

/// Instruction sent ahead of every retrieval-augmented prompt.
pub const RAG_INSTRUCTION: &str = "You help a person find objects they misplaced at home. \
Each context entry is one diary record: time | location | objects | background | activity. \
Answer using only these entries, in the form: Your <object> was last seen at <time> in the <location> near <background>. \
If no entry mentions the object, reply exactly: I'm not sure";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnswerPath {
    ExactMatch,
    Rag,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub path: AnswerPath,
    pub supporting_record: Option<RecordId>,
    #[serde(rename = "latency_ms", with = "serde_ms")]
    pub latency: Duration,
}

impl Answer {
    pub fn not_found() -> Self {
        Self {
            text: NOT_SURE.to_string(),
            path: AnswerPath::NotFound,
            supporting_record: None,
            latency: Duration::ZERO,
        }
    }
}

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error("follow-up without a prior turn in the session")]
    NoPriorTurn,
    #[error("expected a {expected:?} intent, got {got:?}")]
    WrongCategory {
        expected: IntentCategory,
        got: IntentCategory,
    },
    #[error("intent names no object")]
    MissingObject,
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub top_k: usize,
    pub session_cap: usize,
    /// Offset of the wearer's local time from UTC, for spoken times.
    pub utc_offset_minutes: i32,
    /// Prior turns serialized into follow-up prompts.
    pub history_turns: usize,
    /// Records handed to the model for "what was I doing before" questions.
    pub recall_window: usize,
    /// Drop retrieved documents scoring below this cosine.
    pub rag_min_score: Option<f64>,
    /// Ask the language model for the object when no rule matches.
    pub llm_fallback: bool,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            session_cap: DEFAULT_SESSION_CAP,
            utc_offset_minutes: 0,
            history_turns: 4,
            recall_window: 3,
            rag_min_score: None,
            llm_fallback: true,
        }
    }
}

impl QueryConfig {
    pub fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_minutes * 60).unwrap_or(FixedOffset::east_opt(0).expect("zero offset"))
    }
}

/// 12-hour clock rendering, e.g. `3:05pm`.
pub fn display_time(ts: DateTime<Utc>, offset: FixedOffset) -> String {
    ts.with_timezone(&offset).format("%-I:%M%P").to_string()
}

/// The canonical last-seen sentence.
pub fn format_last_seen(record: &ActivityRecord, object: &str, offset: FixedOffset) -> String {
    if record.location.is_empty() || record.location == UNKNOWN_ROOM {
        return NOT_SURE.to_string();
    }
    let mut text = format!(
        "Your {object} was last seen at {} in the {}",
        display_time(record.timestamp, offset),
        record.location
    );
    if !record.background.is_empty() {
        text.push_str(" near ");
        text.push_str(&record.background);
    }
    text.push('.');
    text
}

/// Older variant of the sentence without the time.
pub fn format_last_seen_untimed(record: &ActivityRecord, object: &str) -> String {
    if record.location.is_empty() || record.location == UNKNOWN_ROOM {
        return NOT_SURE.to_string();
    }
    let mut text = format!("Your {object} was last seen in the {}", record.location);
    if !record.background.is_empty() {
        text.push_str(" near ");
        text.push_str(&record.background);
    }
    text.push('.');
    text
}

/// One record as a context document for the language model.
pub fn context_doc(record: &ActivityRecord, offset: FixedOffset) -> String {
    format!(
        "{} | {} | {} | {} | {}",
        display_time(record.timestamp, offset),
        record.location,
        record.objects_in_hand.join(", "),
        record.background,
        record.activity
    )
}

fn is_sentinel(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.');
    t.is_empty() || t.eq_ignore_ascii_case(NO_EVIDENCE_SENTINEL)
}

fn mentions_earlier(text: &str) -> bool {
    let lower = text.to_lowercase();
    ["before", "doing", "earlier", "prior"].iter().any(|w| lower.contains(w))
}

/// Query answering over a diary snapshot.
#[derive(Clone, Copy)]
pub struct QueryEngine<'a> {
    pub providers: &'a Providers,
    pub clock: &'a dyn Clock,
    pub config: &'a QueryConfig,
    /// Current name of each room label stored in the diary, after renames.
    pub labels: Option<&'a BTreeMap<String, String>>,
}

struct Composed {
    text: String,
    path: AnswerPath,
    support: Option<RecordId>,
}

impl Composed {
    fn not_found() -> Self {
        Self {
            text: NOT_SURE.to_string(),
            path: AnswerPath::NotFound,
            support: None,
        }
    }
}

impl<'a> QueryEngine<'a> {
    pub fn new(providers: &'a Providers, clock: &'a dyn Clock, config: &'a QueryConfig) -> Self {
        Self {
            providers,
            clock,
            config,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: &'a BTreeMap<String, String>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// The record as the user should hear it: renamed rooms use their new
    /// label.
    fn shown<'r>(&self, record: &'r ActivityRecord) -> Cow<'r, ActivityRecord> {
        match self.labels.and_then(|l| l.get(&record.location)) {
            Some(label) if *label != record.location => {
                let mut renamed = record.clone();
                renamed.location = label.clone();
                Cow::Owned(renamed)
            }
            _ => Cow::Borrowed(record),
        }
    }

    pub fn parse(&self, transcript: &str, session: &ChatSession) -> Intent {
        if self.config.llm_fallback {
            parse_query_with_fallback(transcript, session, self.providers.llm.as_ref())
        } else {
            parse_query(transcript, session)
        }
    }

    /// Parse and answer one utterance, recording the turn.
    pub fn ask(
        &self,
        transcript: &str,
        db: &ActivitiesDb,
        session: &mut ChatSession,
        now: DateTime<Utc>,
    ) -> Result<(Intent, Answer), QueryError> {
        if transcript.trim().is_empty() {
            return Err(QueryError::EmptyTranscript);
        }
        let start = self.clock.now();
        let intent = self.parse(transcript, session);
        let mut answer = match intent.category {
            IntentCategory::ObjectLocation => self.answer_object_query(&intent, db, session, now)?,
            IntentCategory::FollowUp => self.answer_followup(&intent, db, session, now)?,
            IntentCategory::Recall => self.answer_recall(&intent, db, session, now)?,
            IntentCategory::Unknown => {
                let answer = Answer::not_found();
                session.push_turn(Turn::new(intent.clone(), &answer, None, now));
                answer
            }
        };
        answer.latency = self.clock.elapsed_since(start);
        Ok((intent, answer))
    }

    fn finish(
        &self,
        composed: Composed,
        intent: &Intent,
        object: Option<String>,
        session: &mut ChatSession,
        now: DateTime<Utc>,
        start: Duration,
    ) -> Answer {
        let answer = Answer {
            text: composed.text,
            path: composed.path,
            supporting_record: composed.support,
            latency: self.clock.elapsed_since(start),
        };
        session.push_turn(Turn::new(intent.clone(), &answer, object, now));
        answer
    }

    fn complete(&self, prompt: &str, records: &[&ActivityRecord]) -> Composed {
        if records.is_empty() {
            return Composed::not_found();
        }
        let offset = self.config.offset();
        let docs: Vec<String> = records.iter().map(|r| context_doc(&self.shown(r), offset)).collect();
        match self.providers.llm.complete(prompt, &docs) {
            Ok(text) if !is_sentinel(&text) => Composed {
                text: text.trim().to_string(),
                path: AnswerPath::Rag,
                support: Some(records[0].record_id),
            },
            Ok(_) => Composed::not_found(),
            Err(err) => {
                warn!(%err, "language model unavailable; answering not found");
                Composed::not_found()
            }
        }
    }

    fn retrieve<'d>(&self, text: &str, db: &'d ActivitiesDb) -> Result<Vec<&'d ActivityRecord>, QueryError> {
        let query = match self.providers.text.embed_text(text) {
            Ok(q) => q,
            Err(err) => {
                warn!(%err, "query embedding failed");
                return Ok(Vec::new());
            }
        };
        let hits = db.topk(&query, self.config.top_k.max(1))?;
        Ok(hits
            .into_iter()
            .filter(|h| self.config.rag_min_score.is_none_or(|min| h.score >= min))
            .map(|h| h.record)
            .collect())
    }

    /// Exact object match first (most recent record wins), then
    /// retrieval-augmented completion, then "I'm not sure."
    pub fn answer_object_query(
        &self,
        intent: &Intent,
        db: &ActivitiesDb,
        session: &mut ChatSession,
        now: DateTime<Utc>,
    ) -> Result<Answer, QueryError> {
        if intent.category != IntentCategory::ObjectLocation {
            return Err(QueryError::WrongCategory {
                expected: IntentCategory::ObjectLocation,
                got: intent.category,
            });
        }
        let object = intent.object_phrase.clone().ok_or(QueryError::MissingObject)?;
        let start = self.clock.now();
        let composed = match db.last_seen(&object) {
            Some(record) => Composed {
                text: format_last_seen(&self.shown(record), &object, self.config.offset()),
                path: AnswerPath::ExactMatch,
                support: Some(record.record_id),
            },
            None => {
                let hits = self.retrieve(&intent.raw_text, db)?;
                let prompt = format!("{RAG_INSTRUCTION}\nQuestion: {}", intent.raw_text);
                self.complete(&prompt, &hits)
            }
        };
        Ok(self.finish(composed, intent, Some(object), session, now, start))
    }

    /// Answer a follow-up using the conversation so far and the object the
    /// previous turns were about.
    pub fn answer_followup(
        &self,
        intent: &Intent,
        db: &ActivitiesDb,
        session: &mut ChatSession,
        now: DateTime<Utc>,
    ) -> Result<Answer, QueryError> {
        if intent.category != IntentCategory::FollowUp {
            return Err(QueryError::WrongCategory {
                expected: IntentCategory::FollowUp,
                got: intent.category,
            });
        }
        let last = session.last().ok_or(QueryError::NoPriorTurn)?;
        let start = self.clock.now();
        let object = intent
            .object_phrase
            .clone()
            .or_else(|| session.last_object().map(str::to_string));
        let anchor = last
            .supporting_record
            .and_then(|id| db.get(id))
            .or_else(|| object.as_deref().and_then(|o| db.last_seen(o)));

        let question = match &object {
            Some(o) => format!("{} (object: {o})", intent.raw_text),
            None => intent.raw_text.clone(),
        };
        let prompt = format!(
            "{RAG_INSTRUCTION}\nConversation so far:\n{}Question: {question}",
            session.transcript(self.config.history_turns)
        );
        let records: Vec<&ActivityRecord> = match anchor {
            Some(anchor) if mentions_earlier(&intent.raw_text) => db.preceding(anchor, self.config.recall_window),
            Some(anchor) => {
                let mut records = vec![anchor];
                let related = self.retrieve(&question, db)?;
                records.extend(related.into_iter().filter(|r| r.record_id != anchor.record_id));
                records.truncate(self.config.top_k.max(1));
                records
            }
            None => self.retrieve(&question, db)?,
        };
        let composed = self.complete(&prompt, &records);
        Ok(self.finish(composed, intent, object, session, now, start))
    }

    /// "What was I doing before I misplaced my X": the records just before
    /// the object's last sighting.
    pub fn answer_recall(
        &self,
        intent: &Intent,
        db: &ActivitiesDb,
        session: &mut ChatSession,
        now: DateTime<Utc>,
    ) -> Result<Answer, QueryError> {
        if intent.category != IntentCategory::Recall {
            return Err(QueryError::WrongCategory {
                expected: IntentCategory::Recall,
                got: intent.category,
            });
        }
        let object = intent.object_phrase.clone().ok_or(QueryError::MissingObject)?;
        let start = self.clock.now();
        let composed = match db.last_seen(&object) {
            Some(anchor) => {
                let records = db.preceding(anchor, self.config.recall_window);
                let prompt = format!("{RAG_INSTRUCTION}\nQuestion: {}", intent.raw_text);
                self.complete(&prompt, &records)
            }
            None => Composed::not_found(),
        };
        Ok(self.finish(composed, intent, Some(object), session, now, start))
    }
}
