//! Contracts for the external model capabilities the engine depends on.
//!
//! Every capability (text embedding, frame embedding, hand detection,
//! vision-language description, language-model completion, transcription)
//! is a small synchronous trait. Each has a deterministic offline mock in
//! [`mock`] and, where a wire format exists, a JSON-over-HTTP client in
//! [`remote`]. Implementations must be safe to call concurrently.

pub mod mock;
pub mod remote;
mod retry;
mod script;

use std::sync::Arc;
use std::time::Duration;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::SharedClock;
use crate::embedding::{EmbeddingError, EmbeddingVector};
use crate::ingest::{Frame, FrameBatch};
use crate::text::normalize_objects;

pub use retry::with_retry;
pub use script::{BatchFault, ScriptBook, ScriptEntry};

/// Version tag of the shipped default description prompt.
pub const VLM_PROMPT_VERSION: &str = "v1";
/// Default prompt sent with every tiled batch.
pub const DEFAULT_VLM_PROMPT: &str = include_str!("../../assets/vlm_prompt_v1.txt");

/// Answer a language model gives when the context does not support an answer.
pub const NO_EVIDENCE_SENTINEL: &str = "I'm not sure";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("text to embed is empty")]
    EmptyText,
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("{provider} provider unavailable: {reason}")]
    Unavailable {
        provider: &'static str,
        reason: String,
    },
    #[error("{provider} returned malformed output: {detail}")]
    MalformedOutput {
        provider: &'static str,
        detail: String,
    },
    #[error("audio carries no attached transcript")]
    NoTranscriptAttached,
    #[error("vision-language request has no image")]
    MissingImage,
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl ProviderError {
    /// Whether a retry could plausibly succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Unavailable { .. })
    }

    pub fn unavailable(provider: &'static str, reason: impl Into<String>) -> Self {
        ProviderError::Unavailable {
            provider,
            reason: reason.into(),
        }
    }

    pub fn malformed(provider: &'static str, detail: impl Into<String>) -> Self {
        ProviderError::MalformedOutput {
            provider,
            detail: detail.into(),
        }
    }
}

/// Structured output of the vision-language model for one tiled batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct VlmDescription {
    pub activity: String,
    pub objects_in_hand: Vec<String>,
    pub background: String,
}

impl VlmDescription {
    pub fn new(
        activity: impl Into<String>,
        objects: impl IntoIterator<Item = impl AsRef<str>>,
        background: impl Into<String>,
    ) -> Self {
        Self {
            activity: activity.into().trim().to_string(),
            objects_in_hand: normalize_objects(objects),
            background: background.into().trim().to_string(),
        }
    }

    /// Validate a raw provider reply. Accepts either a JSON object or a
    /// string holding one; `objects` may also be spelled `objects_in_hand`.
    pub fn from_reply(reply: &Value) -> Result<Self, ProviderError> {
        const NAME: &str = "vlm";
        let parsed;
        let obj = match reply {
            Value::Object(map) => map,
            Value::String(raw) => {
                parsed = serde_json::from_str::<Value>(raw)
                    .map_err(|e| ProviderError::malformed(NAME, format!("{raw:?}: {e}")))?;
                match &parsed {
                    Value::Object(map) => map,
                    other => return Err(ProviderError::malformed(NAME, format!("not an object: {other}"))),
                }
            }
            other => return Err(ProviderError::malformed(NAME, format!("not an object: {other}"))),
        };

        let text_field = |key: &str| -> Result<String, ProviderError> {
            match obj.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Null) | None => Ok(String::new()),
                Some(other) => Err(ProviderError::malformed(NAME, format!("`{key}` is not a string: {other}"))),
            }
        };
        let activity = text_field("activity")?;
        let background = text_field("background")?;
        let objects = match obj.get("objects").or_else(|| obj.get("objects_in_hand")) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|item| match item {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(ProviderError::malformed(NAME, format!("object entry is not a string: {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?,
            Some(other) => return Err(ProviderError::malformed(NAME, format!("`objects` is not a list: {other}"))),
        };
        if !obj.contains_key("activity") && !obj.contains_key("background") {
            return Err(ProviderError::malformed(NAME, "reply has neither `activity` nor `background`"));
        }
        Ok(Self::new(activity, objects, background))
    }
}

/// Input to [`VisionLanguageModel::describe`].
#[derive(Debug, Clone, Copy)]
pub struct VlmRequest<'a> {
    pub batch_id: &'a str,
    pub tiled_image: Option<&'a RgbImage>,
    pub previous_activity: &'a str,
    pub prompt: &'a str,
}

/// A recorded utterance. Mock transcription passes `transcript` through.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_base64: Option<String>,
}

impl AudioRef {
    pub fn with_transcript(text: impl Into<String>) -> Self {
        Self {
            transcript: Some(text.into()),
            audio_base64: None,
        }
    }
}

pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

/// Image-embedding model used for room localization.
pub trait FrameEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_frame(&self, frame: &Frame) -> Result<EmbeddingVector, ProviderError>;
}

pub trait HandDetector: Send + Sync {
    /// Whether hands are visible in at least one frame of the batch.
    fn hands_present(&self, batch: &FrameBatch) -> Result<bool, ProviderError>;
}

pub trait VisionLanguageModel: Send + Sync {
    fn describe(&self, request: &VlmRequest<'_>) -> Result<VlmDescription, ProviderError>;
}

pub trait LanguageModel: Send + Sync {
    fn complete(&self, prompt: &str, context_docs: &[String]) -> Result<String, ProviderError>;
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteHttp,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retry_budget: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            endpoint: None,
            timeout_ms: 10_000,
            retry_budget: 2,
        }
    }
}

impl ProviderConfig {
    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::RemoteHttp,
            endpoint: Some(endpoint.into()),
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.timeout_ms == 0 {
            return Err(ProviderError::InvalidConfig("timeout must be positive".into()));
        }
        if self.kind == ProviderKind::RemoteHttp {
            let endpoint = self
                .endpoint
                .as_deref()
                .ok_or_else(|| ProviderError::InvalidConfig("remote-http requires an endpoint".into()))?;
            reqwest::Url::parse(endpoint)
                .map_err(|e| ProviderError::InvalidConfig(format!("bad endpoint {endpoint:?}: {e}")))?;
        }
        Ok(())
    }
}

/// Per-capability provider configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ProvidersConfig {
    pub text_embedder: ProviderConfig,
    pub frame_embedder: ProviderConfig,
    pub vlm: ProviderConfig,
    pub llm: ProviderConfig,
    pub transcriber: ProviderConfig,
}

/// The full set of providers one engine instance runs against.
#[derive(Clone)]
pub struct Providers {
    pub text: Arc<dyn TextEmbedder>,
    pub frames: Arc<dyn FrameEmbedder>,
    pub hands: Arc<dyn HandDetector>,
    pub vlm: Arc<dyn VisionLanguageModel>,
    pub llm: Arc<dyn LanguageModel>,
    pub transcriber: Arc<dyn Transcriber>,
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers")
            .field("text_dim", &self.text.dim())
            .field("frame_dim", &self.frames.dim())
            .finish_non_exhaustive()
    }
}

impl Providers {
    /// All-mock providers sharing `script` for hands and VLM replies.
    pub fn mock(dim: usize, script: ScriptBook, clock: SharedClock) -> Self {
        Self::mock_with(mock::MockSettings::new(dim), script, clock)
    }

    pub fn mock_with(settings: mock::MockSettings, script: ScriptBook, clock: SharedClock) -> Self {
        let latency = settings.latency;
        Self {
            text: Arc::new(mock::HashEmbedder::new(settings.dim, settings.seed)),
            frames: Arc::new(
                mock::SceneEmbedder::new(settings.dim, settings.seed, settings.scene_noise)
                    .with_latency(latency.location, clock.clone()),
            ),
            hands: Arc::new(mock::ScriptedHandDetector::new(script.clone())),
            vlm: Arc::new(mock::ScriptedVlm::new(script).with_latency(latency.vlm, clock.clone())),
            llm: Arc::new(mock::TemplateLlm::new().with_latency(latency.llm, clock)),
            transcriber: Arc::new(mock::PassThroughTranscriber),
        }
    }

    /// Build providers from config: remote capabilities get HTTP clients,
    /// the rest fall back to mocks. Hand detection is always scripted.
    pub fn from_config(
        config: &ProvidersConfig,
        settings: mock::MockSettings,
        script: ScriptBook,
        clock: SharedClock,
    ) -> Result<Self, ProviderError> {
        for c in [
            &config.text_embedder,
            &config.frame_embedder,
            &config.vlm,
            &config.llm,
            &config.transcriber,
        ] {
            c.validate()?;
        }
        let mut providers = Self::mock_with(settings, script, clock.clone());
        let dim = settings.dim;
        if config.text_embedder.kind == ProviderKind::RemoteHttp {
            providers.text = Arc::new(remote::RemoteTextEmbedder::new(&config.text_embedder, dim, clock.clone())?);
        }
        if config.frame_embedder.kind == ProviderKind::RemoteHttp {
            providers.frames = Arc::new(remote::RemoteFrameEmbedder::new(&config.frame_embedder, dim, clock.clone())?);
        }
        if config.vlm.kind == ProviderKind::RemoteHttp {
            providers.vlm = Arc::new(remote::RemoteVlm::new(&config.vlm, clock.clone())?);
        }
        if config.llm.kind == ProviderKind::RemoteHttp {
            providers.llm = Arc::new(remote::RemoteLlm::new(&config.llm, clock.clone())?);
        }
        if config.transcriber.kind == ProviderKind::RemoteHttp {
            providers.transcriber = Arc::new(remote::RemoteTranscriber::new(&config.transcriber, clock)?);
        }
        Ok(providers)
    }

    /// Embedding dimension shared by text and frame embedders.
    pub fn dim(&self) -> Result<usize, ProviderError> {
        let (text, frames) = (self.text.dim(), self.frames.dim());
        if text != frames {
            return Err(ProviderError::DimMismatch {
                expected: text,
                actual: frames,
            });
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn reply_validation_normalizes_objects() {
        let reply = json!({
            "activity": " placing keys in drawer ",
            "objects": ["Keys", "keys ", ""],
            "background": "wooden desk with lamp"
        });
        let d = VlmDescription::from_reply(&reply).unwrap();
        assert_eq!(d.activity, "placing keys in drawer");
        assert_eq!(d.objects_in_hand, vec!["keys"]);
        assert_eq!(d.background, "wooden desk with lamp");
    }

    #[test]
    fn string_reply_is_parsed_or_rejected() {
        let ok = Value::String(r#"{"activity":"","objects":[],"background":"hallway"}"#.into());
        let d = VlmDescription::from_reply(&ok).unwrap();
        assert!(d.objects_in_hand.is_empty());
        assert_eq!(d.background, "hallway");

        let bad = Value::String("???".into());
        assert!(matches!(
            VlmDescription::from_reply(&bad),
            Err(ProviderError::MalformedOutput { .. })
        ));
        assert!(VlmDescription::from_reply(&json!({"objects": "keys", "activity": "x"})).is_err());
        assert!(VlmDescription::from_reply(&json!({"objects": []})).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ProviderConfig::default().validate().is_ok());
        let mut remote = ProviderConfig::remote("http://127.0.0.1:9/embed");
        assert!(remote.validate().is_ok());
        remote.endpoint = None;
        assert!(remote.validate().is_err());
        let zero = ProviderConfig {
            timeout_ms: 0,
            ..ProviderConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
