//! JSON-over-HTTP provider clients. Field names are documented in
//! `docs/wire-format.md`.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use serde_json::{json, Value};

use super::{
    with_retry, AudioRef, FrameEmbedder, LanguageModel, ProviderConfig, ProviderError, TextEmbedder, Transcriber,
    VisionLanguageModel, VlmDescription, VlmRequest,
};
use crate::clock::SharedClock;
use crate::embedding::EmbeddingVector;
use crate::ingest::Frame;

struct JsonEndpoint {
    name: &'static str,
    url: reqwest::Url,
    client: reqwest::blocking::Client,
    retry_budget: u32,
    clock: SharedClock,
}

impl JsonEndpoint {
    fn new(name: &'static str, config: &ProviderConfig, clock: SharedClock) -> Result<Self, ProviderError> {
        config.validate()?;
        let endpoint = config.endpoint.as_deref().unwrap_or_default();
        let url = reqwest::Url::parse(endpoint)
            .map_err(|e| ProviderError::InvalidConfig(format!("bad endpoint {endpoint:?}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| ProviderError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            name,
            url,
            client,
            retry_budget: config.retry_budget,
            clock,
        })
    }

    fn post(&self, body: &Value) -> Result<Value, ProviderError> {
        with_retry(self.retry_budget, self.clock.as_ref(), || {
            let response = self
                .client
                .post(self.url.clone())
                .json(body)
                .send()
                .map_err(|e| ProviderError::unavailable(self.name, e.to_string()))?;
            let status = response.status();
            if !status.is_success() {
                return Err(ProviderError::unavailable(self.name, format!("HTTP {status}")));
            }
            let text = response
                .text()
                .map_err(|e| ProviderError::unavailable(self.name, e.to_string()))?;
            serde_json::from_str(&text).map_err(|e| ProviderError::malformed(self.name, format!("{e}: {text:?}")))
        })
    }

    fn embedding_field(&self, reply: &Value, dim: usize) -> Result<EmbeddingVector, ProviderError> {
        let values: Vec<f64> = reply
            .get("embedding")
            .cloned()
            .ok_or_else(|| ProviderError::malformed(self.name, "missing `embedding`"))
            .and_then(|v| serde_json::from_value(v).map_err(|e| ProviderError::malformed(self.name, e.to_string())))?;
        let embedding = EmbeddingVector::new(values).map_err(|e| ProviderError::malformed(self.name, e.to_string()))?;
        if embedding.dim() != dim {
            return Err(ProviderError::DimMismatch {
                expected: dim,
                actual: embedding.dim(),
            });
        }
        Ok(embedding)
    }

    fn text_field(&self, reply: &Value) -> Result<String, ProviderError> {
        reply
            .get("text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::malformed(self.name, "missing string `text`"))
    }
}

pub(crate) fn encode_png(image: &RgbImage) -> Result<String, image::ImageError> {
    let mut bytes = Vec::new();
    image.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)?;
    Ok(BASE64.encode(bytes))
}

pub struct RemoteTextEmbedder {
    endpoint: JsonEndpoint,
    dim: usize,
}

impl RemoteTextEmbedder {
    pub fn new(config: &ProviderConfig, dim: usize, clock: SharedClock) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: JsonEndpoint::new("text-embedder", config, clock)?,
            dim,
        })
    }
}

impl TextEmbedder for RemoteTextEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let reply = self.endpoint.post(&json!({ "text": text }))?;
        self.endpoint.embedding_field(&reply, self.dim)
    }
}

pub struct RemoteFrameEmbedder {
    endpoint: JsonEndpoint,
    dim: usize,
}

impl RemoteFrameEmbedder {
    pub fn new(config: &ProviderConfig, dim: usize, clock: SharedClock) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: JsonEndpoint::new("frame-embedder", config, clock)?,
            dim,
        })
    }
}

impl FrameEmbedder for RemoteFrameEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_frame(&self, frame: &Frame) -> Result<EmbeddingVector, ProviderError> {
        let reply = self.endpoint.post(&json!({ "frame": frame }))?;
        self.endpoint.embedding_field(&reply, self.dim)
    }
}

pub struct RemoteVlm {
    endpoint: JsonEndpoint,
}

impl RemoteVlm {
    pub fn new(config: &ProviderConfig, clock: SharedClock) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: JsonEndpoint::new("vlm", config, clock)?,
        })
    }
}

impl VisionLanguageModel for RemoteVlm {
    fn describe(&self, request: &VlmRequest<'_>) -> Result<VlmDescription, ProviderError> {
        if request.prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        let images = match request.tiled_image {
            Some(image) => vec![encode_png(image).map_err(|e| ProviderError::malformed("vlm", e.to_string()))?],
            None => Vec::new(),
        };
        let reply = self.endpoint.post(&json!({
            "batch_id": request.batch_id,
            "images": images,
            "previous_activity": request.previous_activity,
            "prompt": request.prompt,
        }))?;
        VlmDescription::from_reply(&reply)
    }
}

pub struct RemoteLlm {
    endpoint: JsonEndpoint,
}

impl RemoteLlm {
    pub fn new(config: &ProviderConfig, clock: SharedClock) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: JsonEndpoint::new("llm", config, clock)?,
        })
    }
}

impl LanguageModel for RemoteLlm {
    fn complete(&self, prompt: &str, context_docs: &[String]) -> Result<String, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        let reply = self.endpoint.post(&json!({ "prompt": prompt, "context": context_docs }))?;
        self.endpoint.text_field(&reply)
    }
}

pub struct RemoteTranscriber {
    endpoint: JsonEndpoint,
}

impl RemoteTranscriber {
    pub fn new(config: &ProviderConfig, clock: SharedClock) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: JsonEndpoint::new("transcriber", config, clock)?,
        })
    }
}

impl Transcriber for RemoteTranscriber {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, ProviderError> {
        let reply = self.endpoint.post(&serde_json::to_value(audio).unwrap_or(Value::Null))?;
        self.endpoint.text_field(&reply)
    }
}
