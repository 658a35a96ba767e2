mod common;

use mempal_core::eval::{replay, Condition, ReplaySettings, Scenario, SearchStrategy, TrialClass};
use mempal_core::query::AnswerPath;

use common::*;

fn class_of(report: &mempal_core::eval::ReplayReport, object: &str) -> TrialClass {
    report
        .trials
        .iter()
        .find(|t| t.object == object)
        .unwrap_or_else(|| panic!("no trial for {object}"))
        .classification
}

#[test]
fn household_classifications() {
    let report = replay(&household(), &ReplaySettings::default()).unwrap();
    assert_eq!(report.ingest.batches, 47);
    assert_eq!(report.vlm_calls, report.hands_batches);
    assert_eq!(report.rooms.len(), 5);

    for object in ["keys", "cup", "phone", "wallet", "medication", "watch", "charger"] {
        assert_eq!(class_of(&report, object), TrialClass::Correct, "{object}");
    }
    assert_eq!(class_of(&report, "ring"), TrialClass::NoObjectDetected);
    assert_eq!(class_of(&report, "magnifying glass"), TrialClass::NoObjectDetected);
    assert_eq!(class_of(&report, "glasses"), TrialClass::ObjectMisidentified);
    assert_eq!(class_of(&report, "tape"), TrialClass::IncorrectLocation);
    assert_eq!(class_of(&report, "remote"), TrialClass::IncorrectLocation);
    for t in report.trials.iter().filter(|t| t.condition == Condition::Visual) {
        assert_eq!(t.classification, TrialClass::Correct, "{}", t.object);
    }
    // baseline trials are searched unaided and never answered
    assert!(report.trials.iter().all(|t| t.condition != Condition::Baseline));
}

#[test]
fn drawer_keys_answer() {
    let report = replay(&household(), &ReplaySettings::default()).unwrap();
    let keys = report.trials.iter().find(|t| t.object == "keys").unwrap();
    assert_eq!(keys.answer.path, AnswerPath::ExactMatch);
    assert_eq!(
        keys.answer.text,
        "Your keys was last seen at 9:01am in the study near wooden desk with lamp."
    );
    let line = report
        .diary_jsonl
        .lines()
        .find(|l| l.contains("\"source_batch\":\"b17\""))
        .expect("b17 produced a record");
    assert!(line.contains("placing keys in drawer"));
}

#[test]
fn accuracy_and_search_sections() {
    let report = replay(&household(), &ReplaySettings::default()).unwrap();
    let table = report.accuracy.as_ref().expect("both conditions present");
    assert_eq!(table.cells[0].count, 7);
    assert_eq!(table.cells[0].total, 12);
    let rendered = report.render();
    assert!(rendered.contains("Correct (MemPal)"));
    assert!(rendered.contains("Mean Process Time (s)"));
    assert_eq!(report.search.len(), 2);
    assert_eq!(report.search[0].strategy, SearchStrategy::Baseline);
    assert!(report.search[1].mean_path_length < report.search[0].mean_path_length);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert!(json.get("diary_jsonl").is_none());
    assert_eq!(json["trials"].as_array().unwrap().len(), 17);
}

#[test]
fn replay_is_byte_identical() {
    let a = replay(&household(), &ReplaySettings::default()).unwrap();
    let b = replay(&household(), &ReplaySettings::default()).unwrap();
    assert_eq!(a.diary_jsonl, b.diary_jsonl);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn invalid_scenarios_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let source = scenario_path().parent().unwrap().to_path_buf();
    for f in ["walkthrough.json", "batches.jsonl"] {
        std::fs::copy(source.join(f), dir.path().join(f)).unwrap();
    }
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path()).unwrap()).unwrap();
    doc["trials"][0]["truth_location"] = "attic".into();
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let err = Scenario::load(&path).unwrap_err();
    assert!(err.to_string().contains("attic"), "{err}");

    doc["trials"][0]["truth_location"] = "study".into();
    doc["trials"][0]["asked_at"] = "2024-05-02T08:00:00Z".into();
    std::fs::write(&path, doc.to_string()).unwrap();
    assert!(Scenario::load(&path).is_err());
}
