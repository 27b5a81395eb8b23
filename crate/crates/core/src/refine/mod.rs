//! Text refinement through an OpenAI-compatible chat endpoint: the prompt
//! protocol, response parsing, a retrying client, a rate limiter and an
//! on-disk response cache.

mod cache;
mod client;
mod prompt;
mod ratelimit;

pub use cache::{cache_key, cached_refine, refine_batch, CacheEntry, ResponseCache};
pub use client::{EndpointConfig, LlmClient, LlmResponse};
pub use prompt::{build_prompt, compose_variant, parse_sections, render_sections, Sections, HEADER_RULES_VERSION};
pub use ratelimit::{Clock, FakeClock, RateLimiter, SystemClock};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum RefineError {
    #[error("text is empty")]
    EmptyText,
    #[error("environment variable {0} holding the API token is not set")]
    AuthMissing(String),
    #[error("request timed out")]
    Timeout,
    #[error("still rate limited after {0} retries")]
    RateLimitedExhausted(usize),
    #[error("http status {0}")]
    HttpError(u16),
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("response does not follow the two-part answer template")]
    FormatMismatch { raw: String },
    #[error("section {0} is empty")]
    MissingSection(&'static str),
    #[error("variant {0} is not built from sections")]
    UnsupportedVariant(String),
    #[error("cache entry {0} failed its checksum")]
    CacheCorrupt(String),
    #[error("cache io: {0}")]
    Io(String),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineResult {
    pub id: String,
    pub raw: String,
    pub positive: String,
    pub negative: String,
    pub model: String,
    pub retrieved_from_cache: bool,
}
