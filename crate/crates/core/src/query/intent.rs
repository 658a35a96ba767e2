//! Rule-first intent parsing with language-model fallback for object
//! extraction.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::debug;

use super::ChatSession;
use crate::providers::mock::EXTRACT_OBJECT_INSTRUCTION;
use crate::providers::{LanguageModel, NO_EVIDENCE_SENTINEL};
use crate::text::normalize_object;

pub const WAKEWORD: &str = "pal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntentCategory {
    ObjectLocation,
    FollowUp,
    Recall,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub category: IntentCategory,
    pub object_phrase: Option<String>,
    pub raw_text: String,
    pub wakeword_present: bool,
}

const PRONOUNS: &[&str] = &["it", "them", "that", "those", "this", "these", "one"];

/// Trailing words that are not part of the object name.
const TRAILING_FILLER: &[&str] = &["please", "again", "now", "anywhere", "today", "right"];

static RECALL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\bwhat (?:was i doing|did i do|was i up to)\b.*?\b(?:before|when) i (?:misplaced|lost|saw|put down|put away|put|left|dropped|had)\s+(?P<obj>.+)$",
    )
    .expect("recall pattern")
});

static OBJECT_PATTERNS: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    [
        r"\bwhere(?:'s|'re| is| are| was| were| did i (?:put|leave|last see|see)| have i (?:put|left))\b\s*(?P<obj>.+)$",
        r"\bi (?:can't|cant|cannot|can not|couldn't|couldnt) (?:find|locate|see)\s+(?P<obj>.+)$",
        r"\b(?:i'm|im|i am) (?:looking|searching) for\s+(?P<obj>.+)$",
        r"\bhave you seen\s+(?P<obj>.+)$",
        r"\b(?:help me )?(?:find|locate)\s+(?P<obj>.+)$",
        r"\bi (?:lost|misplaced)\s+(?P<obj>.+)$",
    ]
    .iter()
    .map(|p| Regex::new(p).expect("object pattern"))
    .collect()
});

/// Lowercase, straighten apostrophes, drop punctuation other than
/// apostrophes, collapse whitespace.
fn clean(transcript: &str) -> String {
    let mapped: String = transcript
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' => '\'',
            c if c.is_alphanumeric() || c == '\'' => c,
            _ => ' ',
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tokens(cleaned: &str) -> impl Iterator<Item = &str> {
    cleaned.split(' ').map(|t| t.trim_matches('\''))
}

pub fn has_wakeword(transcript: &str) -> bool {
    tokens(&clean(transcript)).any(|t| t == WAKEWORD)
}

/// Transcript without the wakeword, for pattern matching.
fn strip_wakeword(cleaned: &str) -> String {
    tokens(cleaned)
        .filter(|t| *t != WAKEWORD && !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalize a captured object phrase. Pronouns yield `None`.
fn object_from_capture(raw: &str) -> Option<String> {
    let mut words: Vec<&str> = raw.split(' ').filter(|w| !w.is_empty()).collect();
    while words.last().is_some_and(|w| TRAILING_FILLER.contains(w)) {
        words.pop();
    }
    let phrase = normalize_object(&words.join(" "));
    if phrase.is_empty() || PRONOUNS.contains(&phrase.as_str()) {
        return None;
    }
    Some(phrase)
}

/// Parse a transcript using rules only.
pub fn parse_query(transcript: &str, session: &ChatSession) -> Intent {
    parse_with(transcript, session, None)
}

/// Parse a transcript; when no rule names an object, ask `llm` to extract one.
pub fn parse_query_with_fallback(transcript: &str, session: &ChatSession, llm: &dyn LanguageModel) -> Intent {
    parse_with(transcript, session, Some(llm))
}

fn parse_with(transcript: &str, session: &ChatSession, llm: Option<&dyn LanguageModel>) -> Intent {
    let cleaned = clean(transcript);
    let wakeword_present = tokens(&cleaned).any(|t| t == WAKEWORD);
    let text = strip_wakeword(&cleaned);
    let intent = |category, object_phrase| Intent {
        category,
        object_phrase,
        raw_text: transcript.to_string(),
        wakeword_present,
    };
    let has_turns = !session.is_empty();

    if let Some(caps) = RECALL.captures(&text) {
        return match object_from_capture(&caps["obj"]) {
            Some(obj) => intent(IntentCategory::Recall, Some(obj)),
            None if has_turns => intent(IntentCategory::FollowUp, None),
            None => intent(IntentCategory::Unknown, None),
        };
    }
    for pattern in OBJECT_PATTERNS.iter() {
        if let Some(caps) = pattern.captures(&text) {
            match object_from_capture(&caps["obj"]) {
                Some(obj) => return intent(IntentCategory::ObjectLocation, Some(obj)),
                // "where is it?" refers back to the conversation
                None if has_turns => return intent(IntentCategory::FollowUp, None),
                None => {}
            }
        }
    }

    if let Some(llm) = llm.filter(|_| !text.is_empty()) {
        let prompt = format!("{EXTRACT_OBJECT_INSTRUCTION}\nUtterance: {transcript}");
        match llm.complete(&prompt, &[]) {
            Ok(reply) => {
                let reply = reply.trim().trim_end_matches('.');
                let none = reply.is_empty()
                    || reply.eq_ignore_ascii_case("none")
                    || reply.eq_ignore_ascii_case(NO_EVIDENCE_SENTINEL);
                if !none {
                    if let Some(obj) = object_from_capture(&clean(reply)) {
                        return intent(IntentCategory::ObjectLocation, Some(obj));
                    }
                }
            }
            Err(err) => debug!(%err, "object extraction fallback failed"),
        }
    }

    if has_turns {
        intent(IntentCategory::FollowUp, None)
    } else {
        intent(IntentCategory::Unknown, None)
    }
}
