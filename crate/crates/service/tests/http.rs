mod common;

use std::time::Duration;

use mempal_core::engine::EngineConfig;
use mempal_core::ingest::{BatchLine, Frame};
use serde_json::{json, Value};

use common::*;

fn error_code(r: reqwest::blocking::Response) -> String {
    let body: Value = r.json().unwrap();
    body["error"].as_str().unwrap_or_default().to_string()
}

#[test]
fn calibration_status_codes() {
    let s = serve_mock(EngineConfig::default());
    let health: Value = s.get("/health").json().unwrap();
    assert_eq!(health["calibrated"], false);

    assert_eq!(s.get("/calibration").status(), 409);
    let line = serde_json::to_value(&household().batches[0]).unwrap();
    assert_eq!(s.post_json("/frames", &line).status(), 409);
    assert_eq!(s.post_json("/query", &json!({"transcript": "Pal, where is my cup?"})).status(), 409);

    assert_eq!(s.post_raw("/calibration", "").status(), 422);
    let r = s.post_raw("/calibration", "{}");
    assert_eq!(r.status(), 422);
    assert_eq!(error_code(r), "no_labels");
    assert_eq!(s.post_raw("/calibration", "[1,2").status(), 422);

    let r = s.calibrate();
    assert_eq!(r.status(), 201);
    let summary: Value = r.json().unwrap();
    assert_eq!(summary["rooms"], json!(["parlor", "hall", "kitchen", "study", "bedroom"]));
    let current: Value = s.get("/calibration").json().unwrap();
    assert_eq!(current["calibration_id"], summary["calibration_id"]);
    assert!(current["adjacency"]["hall"].as_array().unwrap().contains(&json!("study")));
}

#[test]
fn room_review_renames() {
    let s = serve_mock(EngineConfig::default());
    s.calibrate();
    s.ingest_household();
    let r = s.patch_json("/rooms/Study", &json!({"new": "Den"}));
    assert_eq!(r.status(), 200);
    let summary: Value = r.json().unwrap();
    assert!(summary["rooms"].as_array().unwrap().contains(&json!("den")));
    let current: Value = s.get("/calibration").json().unwrap();
    assert!(current["adjacency"]["hall"].as_array().unwrap().contains(&json!("den")));
    assert!(current["adjacency"].get("study").is_none());

    let answer: Value = s.ask("s", "Pal, where are my keys?").json().unwrap();
    assert_eq!(answer["text"], "Your keys was last seen at 9:01am in the den near wooden desk with lamp.");

    assert_eq!(s.patch_json("/rooms/attic", &json!({"new": "loft"})).status(), 404);
    assert_eq!(s.patch_json("/rooms/den", &json!({"new": "kitchen"})).status(), 409);
    assert_eq!(s.patch_json("/rooms/den", &json!({"new": "  "})).status(), 422);
    assert_eq!(s.patch_json("/rooms/den", &json!({"name": "x"})).status(), 400);
}

#[test]
fn frame_ingestion() {
    let s = serve_mock(EngineConfig::default());
    s.calibrate();
    let receipts = s.ingest_household();
    let created = receipts.iter().filter(|r| r["record_created"] == true).count();
    assert_eq!(created, 22);
    let idle = receipts.iter().find(|r| r["hands"] == false).unwrap();
    assert_eq!(idle["record_created"], false);
    assert!(idle["location"].is_string());

    // a batch older than the session's last one
    let mut stale = household().batches[5].clone();
    stale.batch_id = "stale".into();
    let r = s.post_json("/frames", &serde_json::to_value(&stale).unwrap());
    assert_eq!(r.status(), 400);
    assert_eq!(error_code(r), "out_of_order_timestamp");
    assert_eq!(s.post_raw("/frames", "{\"batch_id\": 3}").status(), 400);

    let health: Value = s.get("/health").json().unwrap();
    assert_eq!(health["records"], 22);
}

#[test]
fn trajectory_is_run_length_encoded() {
    let s = serve_mock(EngineConfig::default());
    s.calibrate();
    let t0 = asked_at();
    for (i, room) in ["kitchen", "kitchen", "hall"].iter().enumerate() {
        let line = BatchLine {
            batch_id: format!("t{i}"),
            t: t0 + chrono::Duration::seconds(5 * i as i64),
            session_id: "walk".into(),
            hands: Some(false),
            frames: vec![Frame::from_scene(*room, i as u64)],
            embeddings: vec![],
            vlm: None,
            fault: None,
        };
        assert_eq!(s.post_json("/frames", &serde_json::to_value(&line).unwrap()).status(), 202);
    }
    let rows: Vec<Value> = s.get("/trajectory").json().unwrap();
    let rooms: Vec<&str> = rows.iter().map(|r| r["room"].as_str().unwrap()).collect();
    assert_eq!(rooms, ["kitchen", "hall"]);
    assert_eq!(rows[0]["estimates"], 2);
}

#[test]
fn activities_time_range() {
    let s = serve_mock(EngineConfig::default());
    s.calibrate();
    s.ingest_household();
    let all: Vec<Value> = s.get("/activities?since=0").json().unwrap();
    assert_eq!(all.len(), 22);
    assert_eq!(s.get("/activities").json::<Vec<Value>>().unwrap().len(), 22);
    let cut = all[10]["timestamp"].as_str().unwrap().to_string();
    let recent: Vec<Value> = s.get(&format!("/activities?since={cut}")).json().unwrap();
    assert_eq!(recent.len(), 12);
    let window: Vec<Value> = s
        .get(&format!("/activities?since={cut}&until={}", all[12]["timestamp"].as_str().unwrap()))
        .json()
        .unwrap();
    // `until` is exclusive
    assert_eq!(window.len(), 2);

    assert_eq!(s.get("/activities?since=yesterday").status(), 416);
    let r = s.get(&format!("/activities?since={cut}&until=0"));
    assert_eq!(r.status(), 416);
    assert_eq!(error_code(r), "bad_time_range");
}

#[test]
fn queries_and_wakeword_policy() {
    let s = serve_mock(EngineConfig::default());
    s.calibrate();
    s.ingest_household();
    let r: Value = s.ask("s", "where are my keys").json().unwrap();
    assert_eq!(r["wakeword_present"], false);
    assert_eq!(r["path"], "ExactMatch");
    let r: Value = s.ask("s", "Pal, where is my umbrella?").json().unwrap();
    assert_eq!(r["text"], "I'm not sure.");
    let log: Vec<Value> = s.get("/queries").json().unwrap();
    assert_eq!(log.len(), 2);
    assert!(log[0]["latency_ms"].is_number());

    let strict = serve_mock(EngineConfig {
        require_wakeword: true,
        ..EngineConfig::default()
    });
    strict.calibrate();
    assert_eq!(strict.ask("s", "where are my keys").status(), 204);
    assert_eq!(strict.ask("s", "Pal, where are my keys?").status(), 200);
    assert_eq!(strict.get("/queries").json::<Vec<Value>>().unwrap().len(), 1);
}

#[test]
fn visual_aid_codes() {
    let s = serve_mock(EngineConfig {
        image_retention: 64,
        ..EngineConfig::default()
    });
    s.calibrate();
    s.ingest_household();
    let r = s.get("/visual-aid?object=keys");
    assert_eq!(r.status(), 200);
    let aid: Value = r.json().unwrap();
    assert_eq!(aid["detected_label"], "keys");
    assert_eq!(aid["source_batch"], "b17");
    assert!(!aid["png_base64"].as_str().unwrap().is_empty());
    assert_eq!(s.get("/visual-aid?object=ring").status(), 404);
    assert_eq!(s.get("/visual-aid").status(), 400);
}

#[test]
fn bearer_token() {
    let (engine, script) = mock_engine(EngineConfig::default());
    let s = serve(engine, script, Some("hunter2"));
    assert_eq!(s.calibrate().status(), 201);
    let anonymous = reqwest::blocking::Client::new();
    assert_eq!(anonymous.get(s.url("/health")).send().unwrap().status(), 200);
    assert_eq!(anonymous.get(s.url("/calibration")).send().unwrap().status(), 401);
    let wrong = anonymous.get(s.url("/calibration")).bearer_auth("guess").send().unwrap();
    assert_eq!(wrong.status(), 401);
    assert_eq!(s.get("/calibration").status(), 200);
}

#[test]
fn concurrent_calibration_conflicts() {
    let s = serve_mock(EngineConfig::default());
    let body = serde_json::to_value(walkthrough(&household())).unwrap();
    let url = s.url("/calibration");
    // hold the engine so the first calibration stalls mid-flight
    let engine = s.state.engine().clone();
    let guard = engine.lock().unwrap();
    let first = {
        let (url, body) = (url.clone(), body.clone());
        std::thread::spawn(move || reqwest::blocking::Client::new().post(url).json(&body).send().unwrap().status())
    };
    std::thread::sleep(Duration::from_millis(300));
    let second = reqwest::blocking::Client::new().post(&url).json(&body).send().unwrap();
    assert_eq!(second.status(), 409);
    assert_eq!(error_code(second), "calibration_in_progress");
    drop(guard);
    assert_eq!(first.join().unwrap(), 201);
    // the flag clears once the first finishes
    assert_eq!(s.calibrate().status(), 201);
}
