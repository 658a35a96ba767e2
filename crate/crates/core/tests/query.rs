mod common;

use chrono::Duration;
use mempal_core::engine::EngineConfig;
use mempal_core::query::{AnswerPath, IntentCategory, NOT_SURE};
use mempal_core::store::cosine;

use common::*;

#[test]
fn synonym_query_falls_back_to_retrieval() {
    let mut r = household_rig(EngineConfig::default());
    let now = t0() + Duration::hours(1);
    let transcript = "Pal, where are my spectacles?";
    let response = r.engine.query("s", transcript, now).unwrap().unwrap();
    assert_eq!(response.answer.path, AnswerPath::Rag);

    // brute-force nearest record to the raw transcript
    let q = r.engine.providers().text.embed_text(transcript).unwrap();
    let best = r
        .engine
        .db()
        .records()
        .iter()
        .max_by(|a, b| cosine(&q, &a.embedding).unwrap().total_cmp(&cosine(&q, &b.embedding).unwrap()))
        .unwrap();
    assert!(best.mentions("glasses"));
    assert_eq!(response.answer.supporting_record, Some(best.record_id));
    assert!(response.answer.text.contains("glasses"), "{}", response.answer.text);
}

#[test]
fn recall_reports_the_preceding_activity() {
    let mut r = household_rig(EngineConfig::default());
    let now = t0() + Duration::hours(1);
    let response = r
        .engine
        .query("s", "Pal, what was I doing before I misplaced my keys?", now)
        .unwrap()
        .unwrap();
    assert_eq!(response.intent, IntentCategory::Recall);
    assert!(response.answer.text.starts_with("Right before that"), "{}", response.answer.text);
    let keys = r.engine.db().last_seen("keys").unwrap();
    let cited = r.engine.db().get(response.answer.supporting_record.unwrap()).unwrap();
    assert!(cited.timestamp < keys.timestamp);
}

#[test]
fn unknown_objects_are_not_guessed() {
    let mut r = household_rig(EngineConfig::default());
    let now = t0() + Duration::hours(1);
    for q in ["Pal, where is my umbrella?", "Pal, where is my ring?"] {
        let response = r.engine.query("s", q, now).unwrap().unwrap();
        assert_eq!(response.answer.text, NOT_SURE, "{q}");
    }
}

#[test]
fn answers_use_the_configured_timezone() {
    let mut config = EngineConfig::default();
    config.query.utc_offset_minutes = -300;
    let mut r = household_rig(config);
    let response = r.engine.query("s", "Pal, where are my keys?", t0() + Duration::hours(1)).unwrap().unwrap();
    assert_eq!(
        response.answer.text,
        "Your keys was last seen at 4:01am in the study near wooden desk with lamp."
    );
}
