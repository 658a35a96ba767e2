//! Deterministic offline providers.
//!
//! Everything here is a pure function of its inputs plus a seed, so runs
//! are reproducible across processes. Hashing uses FNV-1a (not the std
//! hasher, whose output is not guaranteed stable) to seed a ChaCha stream.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{
    AudioRef, BatchFault, FrameEmbedder, HandDetector, LanguageModel, ProviderError, ScriptBook,
    TextEmbedder, Transcriber, VisionLanguageModel, VlmDescription, VlmRequest, NO_EVIDENCE_SENTINEL,
};
use crate::clock::SharedClock;
use crate::embedding::EmbeddingVector;
use crate::ingest::{Frame, FrameBatch};
use crate::text::normalize_label;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_SEED: u64 = 0x6d65_6d70_616c;

/// Instruction prefix the query engine uses for fallback object extraction.
/// [`TemplateLlm`] recognizes it and extracts deterministically.
pub const EXTRACT_OBJECT_INSTRUCTION: &str =
    "Extract the object the user is asking about. Reply with the object name only, or `none`.";

/// Simulated per-call latency of the mocks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MockLatency {
    pub location: Duration,
    pub vlm: Duration,
    pub llm: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockSettings {
    pub dim: usize,
    pub seed: u64,
    /// Relative magnitude of per-frame noise added to synthetic scenes.
    pub scene_noise: f64,
    pub latency: MockLatency,
}

impl MockSettings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }
}

impl Default for MockSettings {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            seed: DEFAULT_SEED,
            scene_noise: 0.35,
            latency: MockLatency::default(),
        }
    }
}

pub(crate) fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for byte in *part {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        hash ^= 0xff;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Unit-length Gaussian direction seeded by `hash`.
pub(crate) fn seeded_direction(hash: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(hash);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}

fn add_scaled(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b * scale;
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "my", "your", "our", "is", "are", "was", "were", "where", "what", "when", "i", "me",
    "you", "pal", "at", "in", "on", "into", "onto", "near", "of", "to", "from", "with", "and", "or", "did",
    "do", "does", "can", "cant", "t", "s", "find", "have", "has", "seen", "it", "its", "last", "please",
    "objects", "object", "put", "left", "leave", "looking", "for", "by", "this", "that", "be", "been",
];

/// Concept lexicon: a few near-synonyms map to one token so the mock has a
/// crude notion of "similar objects with different names".
const ALIASES: &[(&str, &str)] = &[
    ("spectacle", "glass"),
    ("eyeglass", "glass"),
    ("spec", "glass"),
    ("cellphone", "phone"),
    ("smartphone", "phone"),
    ("mobile", "phone"),
    ("mug", "cup"),
    ("pill", "medication"),
    ("medicine", "medication"),
    ("meds", "medication"),
    ("earphone", "headphone"),
    ("headset", "headphone"),
    ("earbud", "headphone"),
    ("billfold", "wallet"),
    ("purse", "wallet"),
    ("magnifier", "magnifying"),
    ("controller", "remote"),
    ("clicker", "remote"),
    ("wristwatch", "watch"),
    ("novel", "book"),
    ("binder", "folder"),
];

fn stem(word: &str) -> String {
    if word.len() > 4 && word.ends_with("sses") {
        return word[..word.len() - 2].to_string();
    }
    if word.len() > 4 && word.ends_with("ies") {
        return format!("{}y", &word[..word.len() - 3]);
    }
    if word.len() > 3
        && word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("is")
    {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Content tokens of `text` after stopword removal, stemming and aliasing.
pub fn concept_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(|w| {
            let s = stem(w);
            ALIASES
                .iter()
                .find(|(from, _)| *from == s)
                .map(|(_, to)| (*to).to_string())
                .unwrap_or(s)
        })
        .collect()
}

/// Mock text embedder: a bag of seeded token directions plus a small
/// whole-text component, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    const WHOLE_TEXT_WEIGHT: f64 = 0.25;

    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }
}

impl TextEmbedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let normalized = normalize_label(text);
        if normalized.is_empty() {
            return Err(ProviderError::EmptyText);
        }
        let mut acc = vec![0.0; self.dim];
        for token in concept_tokens(&normalized) {
            add_scaled(
                &mut acc,
                &seeded_direction(fnv1a(self.seed, &[b"tok", token.as_bytes()]), self.dim),
                1.0,
            );
        }
        add_scaled(
            &mut acc,
            &seeded_direction(fnv1a(self.seed, &[b"text", normalized.as_bytes()]), self.dim),
            Self::WHOLE_TEXT_WEIGHT,
        );
        Ok(EmbeddingVector::new(acc)?.normalized())
    }
}

/// Mock image embedder standing in for a CLIP-style model.
///
/// Frames may carry a precomputed embedding (used as-is), a synthetic scene
/// descriptor (room prototype + seeded noise, optionally blended with a
/// second room), or real image bytes (hashed).
pub struct SceneEmbedder {
    dim: usize,
    seed: u64,
    noise: f64,
    latency: Duration,
    clock: Option<SharedClock>,
}

impl SceneEmbedder {
    pub fn new(dim: usize, seed: u64, noise: f64) -> Self {
        Self {
            dim,
            seed,
            noise,
            latency: Duration::ZERO,
            clock: None,
        }
    }

    pub fn with_latency(mut self, latency: Duration, clock: SharedClock) -> Self {
        self.latency = latency;
        self.clock = Some(clock);
        self
    }

    /// Noise-free direction for a room label.
    pub fn room_prototype(&self, room: &str) -> Vec<f64> {
        let room = normalize_label(room);
        seeded_direction(fnv1a(self.seed, &[b"room", room.as_bytes()]), self.dim)
    }
}

impl FrameEmbedder for SceneEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_frame(&self, frame: &Frame) -> Result<EmbeddingVector, ProviderError> {
        if let (Some(clock), false) = (&self.clock, self.latency.is_zero()) {
            clock.sleep(self.latency);
        }
        if let Some(embedding) = &frame.embedding {
            if embedding.dim() != self.dim {
                return Err(ProviderError::DimMismatch {
                    expected: self.dim,
                    actual: embedding.dim(),
                });
            }
            return Ok(embedding.clone());
        }
        if let Some(scene) = &frame.scene {
            let mut acc = vec![0.0; self.dim];
            let blend = scene.blend.as_ref().map(|b| b.weight.clamp(0.0, 1.0)).unwrap_or(0.0);
            add_scaled(&mut acc, &self.room_prototype(&scene.room), 1.0 - blend);
            if let Some(b) = &scene.blend {
                add_scaled(&mut acc, &self.room_prototype(&b.room), blend);
            }
            let noise_hash = fnv1a(
                self.seed,
                &[b"noise", normalize_label(&scene.room).as_bytes(), &scene.variant.to_le_bytes()],
            );
            add_scaled(&mut acc, &seeded_direction(noise_hash, self.dim), self.noise);
            return Ok(EmbeddingVector::new(acc)?.normalized());
        }
        let image = frame
            .decode_image()
            .map_err(|e| ProviderError::malformed("frame-embedder", e.to_string()))?
            .ok_or_else(|| ProviderError::malformed("frame-embedder", "frame has no embedding, scene or image"))?;
        let hash = fnv1a(self.seed, &[b"pixels", image.as_raw()]);
        Ok(EmbeddingVector::new(seeded_direction(hash, self.dim))?)
    }
}

/// Reports the scripted `hands` flag of each batch.
pub struct ScriptedHandDetector {
    script: ScriptBook,
}

impl ScriptedHandDetector {
    pub fn new(script: ScriptBook) -> Self {
        Self { script }
    }
}

impl HandDetector for ScriptedHandDetector {
    fn hands_present(&self, batch: &FrameBatch) -> Result<bool, ProviderError> {
        let entry = self
            .script
            .get(&batch.batch_id)
            .ok_or_else(|| ProviderError::unavailable("hand-detector", format!("no script for batch {}", batch.batch_id)))?;
        if entry.fault == Some(BatchFault::DetectorError) {
            return Err(ProviderError::unavailable("hand-detector", "injected detector fault"));
        }
        Ok(entry.hands.unwrap_or(false))
    }
}

/// Replays scripted VLM replies keyed by batch id and logs every call.
pub struct ScriptedVlm {
    script: ScriptBook,
    latency: Duration,
    clock: Option<SharedClock>,
    calls: AtomicUsize,
    call_log: Mutex<Vec<String>>,
}

impl ScriptedVlm {
    pub fn new(script: ScriptBook) -> Self {
        Self {
            script,
            latency: Duration::ZERO,
            clock: None,
            calls: AtomicUsize::new(0),
            call_log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_latency(mut self, latency: Duration, clock: SharedClock) -> Self {
        self.latency = latency;
        self.clock = Some(clock);
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Batch ids in call order.
    pub fn call_log(&self) -> Vec<String> {
        self.call_log.lock().expect("vlm call log poisoned").clone()
    }
}

impl VisionLanguageModel for ScriptedVlm {
    fn describe(&self, request: &VlmRequest<'_>) -> Result<VlmDescription, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.call_log
            .lock()
            .expect("vlm call log poisoned")
            .push(request.batch_id.to_string());
        if request.prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        if let (Some(clock), false) = (&self.clock, self.latency.is_zero()) {
            clock.sleep(self.latency);
        }
        let entry = self
            .script
            .get(request.batch_id)
            .ok_or_else(|| ProviderError::unavailable("vlm", format!("no script for batch {}", request.batch_id)))?;
        if entry.fault == Some(BatchFault::VlmUnavailable) {
            return Err(ProviderError::unavailable("vlm", "injected timeout"));
        }
        let reply = entry
            .vlm
            .ok_or_else(|| ProviderError::malformed("vlm", "empty reply"))?;
        VlmDescription::from_reply(&reply)
    }
}

/// One context document as produced by the query engine:
/// `time | location | objects | background [| activity]`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ContextDoc<'a> {
    time: &'a str,
    location: &'a str,
    objects: &'a str,
    background: &'a str,
    activity: &'a str,
}

fn parse_doc(doc: &str) -> Option<ContextDoc<'_>> {
    let fields: Vec<&str> = doc.split(" | ").map(str::trim).collect();
    if fields.len() < 4 {
        return None;
    }
    Some(ContextDoc {
        time: fields[0],
        location: fields[1],
        objects: fields[2],
        background: fields[3],
        activity: fields.get(4).copied().unwrap_or(""),
    })
}

/// Mock language model: a fixed template over the first context document.
///
/// With no documents, or when the first document holds none of the objects
/// the question names, it answers the no-evidence sentinel. Questions about
/// what the user was doing get a recall template; "more specific" appends
/// the activity text.
pub struct TemplateLlm {
    latency: Duration,
    clock: Option<SharedClock>,
}

impl TemplateLlm {
    pub fn new() -> Self {
        Self {
            latency: Duration::ZERO,
            clock: None,
        }
    }

    pub fn with_latency(mut self, latency: Duration, clock: SharedClock) -> Self {
        self.latency = latency;
        self.clock = Some(clock);
        self
    }

    fn extract_object(utterance: &str) -> String {
        let cleaned: String = utterance
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() || c == '\'' { c } else { ' ' })
            .collect();
        let tokens: Vec<&str> = cleaned.split_whitespace().collect();
        let pos = tokens
            .iter()
            .rposition(|t| matches!(*t, "my" | "the" | "your"));
        match pos {
            Some(i) if i + 1 < tokens.len() => tokens[i + 1..]
                .iter()
                .copied()
                .filter(|t| *t != "pal")
                .collect::<Vec<_>>()
                .join(" "),
            _ => "none".to_string(),
        }
    }
}

impl Default for TemplateLlm {
    fn default() -> Self {
        Self::new()
    }
}

impl LanguageModel for TemplateLlm {
    fn complete(&self, prompt: &str, context_docs: &[String]) -> Result<String, ProviderError> {
        if prompt.trim().is_empty() {
            return Err(ProviderError::EmptyPrompt);
        }
        if let (Some(clock), false) = (&self.clock, self.latency.is_zero()) {
            clock.sleep(self.latency);
        }
        if let Some(rest) = prompt.strip_prefix(EXTRACT_OBJECT_INSTRUCTION) {
            let utterance = rest.rsplit("Utterance:").next().unwrap_or(rest);
            return Ok(Self::extract_object(utterance));
        }
        let Some(doc) = context_docs.first().and_then(|d| parse_doc(d)) else {
            return Ok(NO_EVIDENCE_SENTINEL.to_string());
        };
        let question = prompt
            .rsplit("Question:")
            .next()
            .unwrap_or(prompt)
            .to_lowercase();
        let near = if doc.background.is_empty() {
            String::new()
        } else {
            format!(" near {}", doc.background)
        };

        if question.contains("before") || question.contains("doing") {
            return Ok(if doc.activity.is_empty() {
                format!("Right before that, at {} you were in the {}{}.", doc.time, doc.location, near)
            } else {
                format!("Right before that, at {} you were {} in the {}.", doc.time, doc.activity, doc.location)
            });
        }

        // no evidence unless the document holds something the question names
        let held = concept_tokens(doc.objects);
        if !concept_tokens(&question).iter().any(|t| held.contains(t)) {
            return Ok(NO_EVIDENCE_SENTINEL.to_string());
        }
        let object = doc.objects.split(',').map(str::trim).find(|o| !o.is_empty());
        let subject = match object {
            Some(o) => format!("Your {o}"),
            None => "It".to_string(),
        };
        let mut answer = format!("{subject} was last seen at {} in the {}{}", doc.time, doc.location, near);
        if question.contains("specific") && !doc.activity.is_empty() {
            answer.push_str(&format!(", while you were {}", doc.activity));
        }
        answer.push('.');
        Ok(answer)
    }
}

/// Returns the transcript attached to the audio reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughTranscriber;

impl Transcriber for PassThroughTranscriber {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, ProviderError> {
        audio
            .transcript
            .clone()
            .ok_or(ProviderError::NoTranscriptAttached)
    }
}
