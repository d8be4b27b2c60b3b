//! Chat-completion and embedding backends.
//!
//! [`HttpChatClient`] and [`HttpEmbedder`] speak the OpenAI-compatible wire
//! format. [`MockPersona`] is a deterministic synthetic respondent used to
//! verify the pipeline end to end.

mod embeddings;
mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embeddings::{CachedEmbedder, Embedder, HashingEmbedder, HttpEmbedder, PrecomputedEmbeddings};
pub use http::HttpChatClient;
pub use mock::{AwarenessReply, MockPersona, MockTarget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClientError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("endpoint returned an empty completion")]
    EmptyCompletion,
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("embedding dimension changed from {expected} to {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no precomputed vector for text: {0:.60}")]
    MissingVector(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: Option<u32>,
    pub max_tokens: u32,
    pub request_seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 0.01, top_p: 1.0, top_k: Some(50), max_tokens: 64, request_seed: None }
    }
}

impl SamplingParams {
    pub fn with_temperature(temperature: f64) -> Self {
        Self { temperature, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.top_k == Some(0) {
            return Err("top_k must be positive".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Anything that can answer one (system, user) exchange.
pub trait ChatBackend: Send + Sync {
    /// `system` may be empty, in which case no system message is sent.
    fn chat(&self, model: &str, system: &str, user: &str, params: &SamplingParams) -> Result<String, ClientError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    fn chat(&self, model: &str, system: &str, user: &str, params: &SamplingParams) -> Result<String, ClientError> {
        (**self).chat(model, system, user, params)
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn chat(&self, model: &str, system: &str, user: &str, params: &SamplingParams) -> Result<String, ClientError> {
        (**self).chat(model, system, user, params)
    }
}

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_millis(500), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Upper bound of the jittered delay before retry number `attempt` (0-based).
    pub fn ceiling(&self, attempt: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(attempt as i32))
    }

    pub fn delay(&self, attempt: u32, rng: &mut impl rand::Rng) -> Duration {
        self.ceiling(attempt).mul_f64(rng.gen_range(0.0..=1.0))
    }
}

/// 64-bit digest of a sequence of byte strings, stable across platforms
/// and releases. Parts are length-prefixed so ("ab","c") != ("a","bc").
pub fn stable_hash<I, P>(parts: I) -> u64
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut h = Sha256::new();
    for p in parts {
        let p = p.as_ref();
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Hex SHA-256 of a string, used for message provenance.
pub fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
