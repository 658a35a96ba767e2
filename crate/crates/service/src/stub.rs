//! Stand-in model server. Serves the mock providers over the same JSON
//! wire format the remote provider clients speak, so a deployment can be
//! exercised end to end without real models.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use mempal_core::ingest::Frame;
use mempal_core::providers::mock::MockSettings;
use mempal_core::providers::{AudioRef, BatchFault, ProviderError, Providers, ScriptBook};
use mempal_core::SystemClock;
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Clone)]
pub struct StubModels {
    providers: Providers,
    script: ScriptBook,
    vlm_calls: Arc<AtomicUsize>,
}

impl StubModels {
    pub fn new(settings: MockSettings, script: ScriptBook) -> Self {
        Self {
            providers: Providers::mock_with(settings, script.clone(), SystemClock::shared()),
            script,
            vlm_calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn script(&self) -> &ScriptBook {
        &self.script
    }

    pub fn vlm_calls(&self) -> usize {
        self.vlm_calls.load(Ordering::SeqCst)
    }

    /// Routes: `/text-embedder`, `/frame-embedder`, `/vlm`, `/llm`,
    /// `/transcriber`.
    pub fn router(self) -> Router {
        Router::new()
            .route("/text-embedder", post(text_embedder))
            .route("/frame-embedder", post(frame_embedder))
            .route("/vlm", post(vlm))
            .route("/llm", post(llm))
            .route("/transcriber", post(transcriber))
            .with_state(self)
    }
}

fn failure(err: ProviderError) -> Response {
    let status = if err.is_transient() {
        StatusCode::SERVICE_UNAVAILABLE
    } else {
        StatusCode::UNPROCESSABLE_ENTITY
    };
    (status, Json(json!({ "error": err.to_string() }))).into_response()
}

#[derive(Deserialize)]
struct TextRequest {
    text: String,
}

async fn text_embedder(State(stub): State<StubModels>, Json(req): Json<TextRequest>) -> Response {
    match stub.providers.text.embed_text(&req.text) {
        Ok(e) => Json(json!({ "embedding": e })).into_response(),
        Err(err) => failure(err),
    }
}

#[derive(Deserialize)]
struct FrameRequest {
    frame: Frame,
}

async fn frame_embedder(State(stub): State<StubModels>, Json(req): Json<FrameRequest>) -> Response {
    match stub.providers.frames.embed_frame(&req.frame) {
        Ok(e) => Json(json!({ "embedding": e })).into_response(),
        Err(err) => failure(err),
    }
}

#[derive(Deserialize)]
struct VlmRequest {
    batch_id: String,
    #[serde(default)]
    images: Vec<String>,
}

/// Replies with the scripted raw VLM output, unvalidated, so that clients
/// see malformed replies exactly as scripted.
async fn vlm(State(stub): State<StubModels>, Json(req): Json<VlmRequest>) -> Response {
    stub.vlm_calls.fetch_add(1, Ordering::SeqCst);
    if req.images.is_empty() {
        return failure(ProviderError::MissingImage);
    }
    let Some(entry) = stub.script.get(&req.batch_id) else {
        return failure(ProviderError::unavailable("vlm", format!("no script for batch {}", req.batch_id)));
    };
    if entry.fault == Some(BatchFault::VlmUnavailable) {
        return failure(ProviderError::unavailable("vlm", "injected timeout"));
    }
    Json(entry.vlm.unwrap_or(Value::Null)).into_response()
}

#[derive(Deserialize)]
struct LlmRequest {
    prompt: String,
    #[serde(default)]
    context: Vec<String>,
}

async fn llm(State(stub): State<StubModels>, Json(req): Json<LlmRequest>) -> Response {
    match stub.providers.llm.complete(&req.prompt, &req.context) {
        Ok(text) => Json(json!({ "text": text })).into_response(),
        Err(err) => failure(err),
    }
}

async fn transcriber(State(stub): State<StubModels>, Json(audio): Json<AudioRef>) -> Response {
    match stub.providers.transcriber.transcribe(&audio) {
        Ok(text) => Json(json!({ "text": text })).into_response(),
        Err(err) => failure(err),
    }
}
