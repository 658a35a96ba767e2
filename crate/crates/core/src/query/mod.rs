//! Spoken-query understanding and answering over the activity diary.

mod answer;
mod intent;
mod session;

pub use answer::{
    context_doc, display_time, format_last_seen, format_last_seen_untimed, Answer, AnswerPath, QueryConfig,
    QueryEngine, QueryError, NOT_SURE, RAG_INSTRUCTION,
};
pub use intent::{has_wakeword, parse_query, parse_query_with_fallback, Intent, IntentCategory, WAKEWORD};
pub use session::{ChatSession, Turn, DEFAULT_SESSION_CAP};
