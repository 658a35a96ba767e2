//! Egocentric activity diary and object-retrieval engine.
//!
//! Frame batches from a worn camera are localized against a per-home room
//! map, gated on hand presence, described by a vision-language model and
//! stored as an embedded text diary. Spoken "where is my X" queries are
//! answered from that diary by exact object lookup or retrieval-augmented
//! generation.

pub mod clock;
pub mod config;
pub mod embedding;
pub mod engine;
pub mod eval;
pub mod ingest;
pub mod providers;
pub mod query;
pub mod spatial;
pub mod store;
pub mod text;

pub use clock::{Clock, ManualClock, SharedClock, SystemClock};
pub use embedding::{EmbeddingError, EmbeddingVector};
pub use config::MempalConfig;
pub use engine::{Engine, EngineConfig, EngineError};
