//! Single choke point for all model calls.
//!
//! Every prompt in the pipeline goes through [`Gateway::complete`], which
//! layers a content-addressed response cache, an optional rate limiter, and
//! an optional call budget over one of two backends:
//!
//! - [`HttpBackend`]: OpenAI-compatible chat completions with retry and
//!   exponential backoff,
//! - [`ScriptedBackend`]: a deterministic rule table used for reproducible
//!   tests and planted-structure experiments.
//!
//! Requests serialize canonically (sorted keys, compact form), so equal
//! requests always share a cache key regardless of construction order.

mod cache;
mod http;
mod scripted;

pub use cache::ResponseCache;
pub use http::{HttpBackend, RetryPolicy};
pub use scripted::{ScriptedBackend, ScriptedRule};

use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Sampling default used for every call (`top_p`).
pub const DEFAULT_TOP_P: f64 = 0.5;
/// Temperature for generation and sampling calls.
pub const SAMPLING_TEMPERATURE: f64 = 1.0;
/// Temperature for argmax-style calls (tag assignment, option choice).
pub const GREEDY_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("no scripted rule matched the prompt")]
    NoMatchingRule,
    #[error("malformed scripted rule at line {line}: {message}")]
    MalformedRule { line: usize, message: String },
    #[error("call budget exhausted ({limit} calls)")]
    BudgetExhausted { limit: u64 },
    #[error("cache io error on {path}: {source}")]
    CacheIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// A single chat completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Distinguishes independent samples of an otherwise identical prompt.
    /// Forwarded as the `seed` parameter on HTTP backends and exposed to
    /// scripted rules as a trailing `seed: N` line.
    pub seed_hint: Option<u64>,
}

impl ChatRequest {
    /// A generation/sampling call: temperature 1.0, top_p 0.5.
    pub fn sampling(system: impl Into<String>, user: impl Into<String>, max_tokens: u32) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            temperature: SAMPLING_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens,
            seed_hint: None,
        }
    }

    /// An argmax-style call: temperature 0.0, top_p 0.5.
    pub fn greedy(system: impl Into<String>, user: impl Into<String>, max_tokens: u32) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            temperature: GREEDY_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            max_tokens,
            seed_hint: None,
        }
    }

    pub fn with_seed_hint(mut self, hint: u64) -> Self {
        self.seed_hint = Some(hint);
        self
    }

    /// Canonical serialization: compact JSON with lexicographically sorted
    /// keys. Two requests with equal fields always serialize identically.
    pub fn canonical(&self) -> String {
        // serde_json's default Map is a BTreeMap, so key order is sorted
        // regardless of insertion order here.
        let value = serde_json::json!({
            "system": self.system,
            "user": self.user,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
            "seed_hint": self.seed_hint,
        });
        serde_json::to_string(&value).expect("request serializes")
    }
}

/// Collision-resistant digest of the canonical request serialization.
/// Stable across runs and platforms.
pub fn cache_key(request: &ChatRequest) -> String {
    let digest = Sha256::digest(request.canonical().as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub backend: BackendKind,
    pub cached: bool,
}

/// A completion backend. Implementations must be safe to call concurrently.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
    fn kind(&self) -> BackendKind;
}

/// Process-wide request pacing: at most `rps` backend calls per second.
///
/// Slots are reserved under a lock and slept out after releasing it, so
/// concurrent callers are spaced at least `1/rps` apart without serializing
/// the actual backend calls.
pub struct RateLimiter {
    min_interval: Duration,
    next_free: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        assert!(requests_per_second > 0.0, "rate must be positive");
        RateLimiter {
            min_interval: Duration::from_secs_f64(1.0 / requests_per_second),
            next_free: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait_until = {
            let mut next = self.next_free.lock().expect("limiter lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    /// Completions answered by the backend (cache misses).
    pub backend_calls: u64,
    /// Completions answered from the cache.
    pub cache_hits: u64,
}

/// The orchestration layer every module talks to.
pub struct Gateway {
    backend: Box<dyn Backend>,
    cache: Option<ResponseCache>,
    limiter: Option<RateLimiter>,
    budget: Option<Budget>,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

struct Budget {
    limit: u64,
    remaining: AtomicI64,
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Gateway {
            backend,
            cache: None,
            limiter: None,
            budget: None,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_rate_limit(mut self, requests_per_second: f64) -> Self {
        self.limiter = Some(RateLimiter::new(requests_per_second));
        self
    }

    /// Cap the number of backend calls (cache hits are free). Exceeding the
    /// budget surfaces as [`GatewayError::BudgetExhausted`].
    pub fn with_budget(mut self, max_calls: u64) -> Self {
        self.budget = Some(Budget {
            limit: max_calls,
            remaining: AtomicI64::new(max_calls as i64),
        });
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    /// Complete a request, consulting the cache first.
    ///
    /// Duplicate concurrent misses on one key may both reach the backend;
    /// either response may end up stored (they are identical under a
    /// deterministic backend).
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&key) {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(ChatResponse {
                    text,
                    backend: self.backend.kind(),
                    cached: true,
                });
            }
        }
        if let Some(budget) = &self.budget {
            let prev = budget.remaining.fetch_sub(1, Ordering::SeqCst);
            if prev <= 0 {
                return Err(GatewayError::BudgetExhausted {
                    limit: budget.limit,
                });
            }
        }
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.backend.complete(request)?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        if let Some(cache) = &self.cache {
            cache.insert(&key, &text)?;
        }
        Ok(ChatResponse {
            text,
            backend: self.backend.kind(),
            cached: false,
        })
    }
}
