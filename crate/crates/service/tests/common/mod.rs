#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};
use mempal_core::engine::{Engine, EngineConfig, Walkthrough};
use mempal_core::eval::{Home, Scenario};
use mempal_core::providers::mock::MockSettings;
use mempal_core::providers::{Providers, ScriptBook};
use mempal_core::{ManualClock, SharedClock};
use mempal_service::{router, spawn_server, AppState, ServerHandle};
use reqwest::blocking::{Client, Response};
use serde_json::Value;

pub fn household() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/household/scenario.json");
    Scenario::load(&path).expect("bundled scenario loads")
}

pub fn walkthrough(scenario: &Scenario) -> Walkthrough {
    match &scenario.home {
        Home::Walkthrough(w) => w.clone(),
        Home::RoomMap(_) => panic!("household scenario ships a walkthrough"),
    }
}

/// Evaluation time for queries, after every household batch.
pub fn asked_at() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 2, 9, 0, 0).unwrap() + Duration::hours(2)
}

/// Mock engine on a virtual clock, with the script book its hand detector
/// and VLM read.
pub fn mock_engine(config: EngineConfig) -> (Engine, ScriptBook) {
    let clock: SharedClock = ManualClock::shared();
    let script = ScriptBook::new();
    let providers = Providers::mock_with(MockSettings::default(), script.clone(), clock.clone());
    (Engine::new(config, providers, clock).unwrap(), script)
}

pub struct Served {
    pub server: ServerHandle,
    pub state: AppState,
    pub client: Client,
    pub token: Option<String>,
}

impl Served {
    pub fn url(&self, path: &str) -> String {
        self.server.url(path)
    }

    fn auth(&self, req: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    pub fn get(&self, path: &str) -> Response {
        self.auth(self.client.get(self.url(path))).send().unwrap()
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Response {
        self.auth(self.client.post(self.url(path)).json(body)).send().unwrap()
    }

    pub fn post_raw(&self, path: &str, body: impl Into<String>) -> Response {
        self.auth(
            self.client
                .post(self.url(path))
                .header("content-type", "application/json")
                .body(body.into()),
        )
        .send()
        .unwrap()
    }

    pub fn patch_json(&self, path: &str, body: &Value) -> Response {
        self.auth(self.client.patch(self.url(path)).json(body)).send().unwrap()
    }

    pub fn calibrate(&self) -> Response {
        self.post_json("/calibration", &serde_json::to_value(walkthrough(&household())).unwrap())
    }

    /// Post every household batch; returns the receipts.
    pub fn ingest_household(&self) -> Vec<Value> {
        household()
            .batches
            .iter()
            .map(|line| {
                let r = self.post_json("/frames", &serde_json::to_value(line).unwrap());
                assert_eq!(r.status(), 202, "{}", line.batch_id);
                r.json().unwrap()
            })
            .collect()
    }

    pub fn ask(&self, session: &str, transcript: &str) -> Response {
        self.post_json(
            "/query",
            &serde_json::json!({ "session_id": session, "transcript": transcript, "now": asked_at() }),
        )
    }
}

pub fn serve(engine: Engine, script: ScriptBook, token: Option<&str>) -> Served {
    let state = AppState::new(engine, script, token.map(str::to_string));
    let server = spawn_server(router(state.clone()), "127.0.0.1:0").unwrap();
    Served {
        server,
        state,
        client: Client::new(),
        token: token.map(str::to_string),
    }
}

pub fn serve_mock(config: EngineConfig) -> Served {
    let (engine, script) = mock_engine(config);
    serve(engine, script, None)
}

pub fn shared(engine: &Arc<std::sync::Mutex<Engine>>) -> std::sync::MutexGuard<'_, Engine> {
    engine.lock().unwrap()
}
