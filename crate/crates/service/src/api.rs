//! JSON-over-HTTP facade over one [`Engine`].
//!
//! The engine is single-writer: every request runs on the blocking pool
//! behind one mutex, so calls are serialized in arrival order.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::{DateTime, TimeZone, Utc};
use mempal_core::engine::{Engine, EngineError, Walkthrough};
use mempal_core::ingest::{BatchLine, IngestError};
use mempal_core::providers::ScriptBook;
use mempal_core::spatial::SpatialError;
use mempal_core::store::StoreError;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Mutex<Engine>>,
    script: ScriptBook,
    calibrating: Arc<AtomicBool>,
    token: Option<Arc<str>>,
}

impl AppState {
    /// `script` must be the book the engine's mock hand detector and VLM
    /// read, so scripted fields on posted batches take effect.
    pub fn new(engine: Engine, script: ScriptBook, token: Option<String>) -> Self {
        Self::shared(Arc::new(Mutex::new(engine)), script, token)
    }

    pub fn shared(engine: Arc<Mutex<Engine>>, script: ScriptBook, token: Option<String>) -> Self {
        Self {
            engine,
            script,
            calibrating: Arc::new(AtomicBool::new(false)),
            token: token.map(Arc::from),
        }
    }

    pub fn engine(&self) -> &Arc<Mutex<Engine>> {
        &self.engine
    }

    async fn with_engine<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Engine) -> Result<T, ApiError> + Send + 'static,
    {
        let engine = self.engine.clone();
        tokio::task::spawn_blocking(move || {
            let mut guard = engine.lock().map_err(|_| ApiError::internal("engine lock poisoned"))?;
            f(&mut guard)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(err: EngineError) -> Self {
        let message = err.to_string();
        let (status, code) = match &err {
            EngineError::NotCalibrated => (StatusCode::CONFLICT, "not_calibrated"),
            EngineError::NoSighting(_) => (StatusCode::NOT_FOUND, "no_sighting"),
            EngineError::ImageNotRetained(_) => (StatusCode::GONE, "image_not_retained"),
            EngineError::ImportConflict(_) => (StatusCode::CONFLICT, "import_conflict"),
            EngineError::Spatial(e) => spatial_status(e),
            EngineError::Ingest(IngestError::OutOfOrderTimestamp { .. })
            | EngineError::Store(StoreError::OutOfOrderTimestamp { .. })
            | EngineError::Ingest(IngestError::Store(StoreError::OutOfOrderTimestamp { .. })) => {
                (StatusCode::BAD_REQUEST, "out_of_order_timestamp")
            }
            EngineError::Ingest(IngestError::Provider(_)) | EngineError::Provider(_) => {
                (StatusCode::BAD_GATEWAY, "provider_error")
            }
            EngineError::Ingest(_) | EngineError::Query(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            EngineError::Store(StoreError::Parse { .. } | StoreError::UnsupportedSchema(_))
            | EngineError::Store(StoreError::DimMismatch { .. }) => (StatusCode::BAD_REQUEST, "bad_diary"),
            EngineError::Store(_) | EngineError::Io(_) | EngineError::Json(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        Self::new(status, code, message)
    }
}

fn spatial_status(err: &SpatialError) -> (StatusCode, &'static str) {
    match err {
        SpatialError::UnknownRoom(_) => (StatusCode::NOT_FOUND, "unknown_room"),
        SpatialError::DuplicateLabel(_) => (StatusCode::CONFLICT, "duplicate_label"),
        SpatialError::NoLabels => (StatusCode::UNPROCESSABLE_ENTITY, "no_labels"),
        _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_calibration"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(json!({ "error": self.code, "message": self.message }));
        (self.status, body).into_response()
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

// ---------------------------------------------------------------------------

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/calibration", post(calibrate).get(calibration))
        .route("/rooms/{old}", patch(rename_room))
        .route("/frames", post(frames))
        .route("/query", post(query))
        .route("/activities", get(activities))
        .route("/trajectory", get(trajectory))
        .route("/export", get(export))
        .route("/import", post(import))
        .route("/visual-aid", get(visual_aid))
        .route("/queries", get(queries))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .merge(protected)
        .with_state(state)
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_ref()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token")
                .into_response();
        }
    }
    next.run(request).await
}

async fn health(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    state
        .with_engine(|engine| {
            Ok(Json(json!({
                "status": "ok",
                "calibrated": engine.room_map().is_some(),
                "records": engine.db().len(),
            })))
        })
        .await
}

/// Clears the in-progress flag however the calibration ends.
struct CalibrationGuard(Arc<AtomicBool>);

impl Drop for CalibrationGuard {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

async fn calibrate(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let walkthrough: Walkthrough = if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_labels", "empty walkthrough"));
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_calibration", e.to_string()))?
    };
    if state
        .calibrating
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_err()
    {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "calibration_in_progress",
            "another calibration is running",
        ));
    }
    let guard = CalibrationGuard(state.calibrating.clone());
    let summary = state
        .with_engine(move |engine| {
            let _guard = guard;
            Ok(engine.calibrate(&walkthrough)?)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn calibration(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    state
        .with_engine(|engine| {
            let map = engine.room_map().ok_or(EngineError::NotCalibrated)?;
            Ok(Json(json!({
                "calibration_id": map.calibration_id,
                "rooms": map.labels(),
                "adjacency": map.adjacency,
            })))
        })
        .await
}

#[derive(Debug, Deserialize)]
struct RenameRequest {
    new: String,
}

async fn rename_room(
    State(state): State<AppState>,
    Path(old): Path<String>,
    body: Bytes,
) -> Result<Json<mempal_core::engine::CalibrationSummary>, ApiError> {
    let request: RenameRequest = parse_body(&body)?;
    state
        .with_engine(move |engine| Ok(Json(engine.rename_room(&old, &request.new)?)))
        .await
}

async fn frames(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let line: BatchLine = parse_body(&body)?;
    if line.hands.is_some() || line.vlm.is_some() || line.fault.is_some() {
        line.register(&state.script);
    }
    let receipt = state.with_engine(move |engine| Ok(engine.ingest(&line.batch())?)).await?;
    Ok((StatusCode::ACCEPTED, Json(receipt)).into_response())
}

/// Request body of `POST /query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default = "default_session")]
    pub session_id: String,
    pub transcript: String,
    /// Evaluation time; the server clock when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub now: Option<DateTime<Utc>>,
}

fn default_session() -> String {
    "default".into()
}

async fn query(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: QueryRequest = parse_body(&body)?;
    let now = request.now.unwrap_or_else(Utc::now);
    let response = state
        .with_engine(move |engine| Ok(engine.query(&request.session_id, &request.transcript, now)?))
        .await?;
    Ok(match response {
        Some(r) => Json(r).into_response(),
        // ignored: the wakeword is required and was not heard
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Debug, Deserialize)]
struct TimeRange {
    since: Option<String>,
    until: Option<String>,
}

/// RFC 3339 or integer seconds since the Unix epoch.
fn parse_instant(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(secs) = raw.trim().parse::<i64>() {
        return Utc.timestamp_opt(secs, 0).single();
    }
    DateTime::parse_from_rfc3339(raw.trim()).ok().map(|t| t.with_timezone(&Utc))
}

fn bad_range(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::RANGE_NOT_SATISFIABLE, "bad_time_range", message)
}

async fn activities(
    State(state): State<AppState>,
    Query(range): Query<TimeRange>,
) -> Result<Response, ApiError> {
    let parse = |raw: &Option<String>, name: &str| match raw {
        None => Ok(None),
        Some(r) => parse_instant(r)
            .map(Some)
            .ok_or_else(|| bad_range(format!("`{name}` is not a timestamp: {r:?}"))),
    };
    let since = parse(&range.since, "since")?;
    let until = parse(&range.until, "until")?;
    if let (Some(s), Some(u)) = (since, until) {
        if u < s {
            return Err(bad_range("`until` precedes `since`"));
        }
    }
    state
        .with_engine(move |engine| {
            let records: Vec<_> = engine.db().between(since, until).into_iter().cloned().collect();
            Ok(Json(records).into_response())
        })
        .await
}

async fn trajectory(State(state): State<AppState>) -> Result<Response, ApiError> {
    state
        .with_engine(|engine| Ok(Json(engine.trajectory()).into_response()))
        .await
}

async fn export(State(state): State<AppState>) -> Result<Response, ApiError> {
    let body = state.with_engine(|engine| Ok(engine.export())).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn import(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("diary is not UTF-8"))?;
    let imported = state.with_engine(move |engine| Ok(engine.import(&text)?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "imported": imported }))).into_response())
}

#[derive(Debug, Deserialize)]
struct ObjectParam {
    object: String,
}

async fn visual_aid(
    State(state): State<AppState>,
    Query(param): Query<ObjectParam>,
) -> Result<Json<mempal_core::engine::VisualAid>, ApiError> {
    state
        .with_engine(move |engine| Ok(Json(engine.visual_aid(&param.object)?)))
        .await
}

async fn queries(State(state): State<AppState>) -> Result<Response, ApiError> {
    state
        .with_engine(|engine| Ok(Json(engine.query_log().to_vec()).into_response()))
        .await
}
