//! Client abstraction over generation, judging and reward endpoints.
//!
//! Every call path goes through [`ChatBackend`] or [`RewardBackend`]. Real
//! endpoints speak the chat-completions JSON shape (see [`http`]); the
//! scripted mocks in [`mock`] produce bodies in the same shape and decode
//! them with the same codec.

pub mod cache;
pub mod http;
pub mod mock;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, CacheStats, ResponseCache};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed endpoint reply ({reason}); raw body: {raw}")]
    Protocol { reason: String, raw: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gave up after {attempts} attempt(s): {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Transport and 5xx-class failures are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status >= 500,
            BackendError::RetriesExhausted { last, .. } => last.is_retryable(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    /// Distinguishes otherwise identical sampled requests; also forwarded
    /// to endpoints that accept a seed.
    pub seed_hint: Option<u64>,
}

impl GenerationRequest {
    /// A greedy single-user-message request.
    pub fn greedy(prompt: impl Into<String>, max_tokens: u32) -> Self {
        Self {
            messages: vec![Message::user(prompt)],
            temperature: 0.0,
            top_p: 1.0,
            max_tokens,
            want_logprobs: false,
            seed_hint: None,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::InvalidRequest("no messages".into()));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be >= 1".into(),
            ));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(
                "top_p must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Content of the last user message.
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    pub top: Vec<TopLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
    /// `None` when logprobs were not requested or the endpoint does not
    /// provide them.
    pub token_logprobs: Option<Vec<TokenLogprob>>,
    pub backend_id: String,
}

pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError>;
}

/// Scalar reward endpoint: one score per (context, answer).
pub trait RewardBackend: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, context: &str, answer: &str) -> Result<f64, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_backoff_ms: 0,
            max_backoff_ms: 0,
        }
    }

    fn delay(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64 << failed_attempts.saturating_sub(1).min(16);
        Duration::from_millis(
            self.initial_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }

    /// Runs `op` until it succeeds, fails permanently, or the budget is spent.
    pub fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let budget = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < budget => {
                    log::debug!("attempt {attempt} failed ({e}); retrying");
                    std::thread::sleep(self.delay(attempt));
                }
                Err(e) if e.is_retryable() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Issues one request with bounded retries.
pub fn chat_complete(
    request: &GenerationRequest,
    backend: &dyn ChatBackend,
    policy: &RetryPolicy,
) -> Result<GenerationResponse, BackendError> {
    request.validate()?;
    policy.run(|| backend.complete(request))
}

/// Counting semaphore bounding in-flight calls.
#[derive(Debug)]
pub struct InFlightLimit {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut active = self.active.lock().unwrap();
            while *active >= self.limit {
                active = self.freed.wait(active).unwrap();
            }
            *active += 1;
        }
        let out = f();
        *self.active.lock().unwrap() -= 1;
        self.freed.notify_one();
        out
    }
}

/// Runs `f(0..n)` on up to `workers` threads; results come back in index order.
pub fn fan_out<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                *slots[i].lock().unwrap() = Some(v);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// A chat backend bundled with its retry policy, in-flight bound and cache.
#[derive(Clone)]
pub struct ChatHandle {
    pub backend: Arc<dyn ChatBackend>,
    pub policy: RetryPolicy,
    pub limit: Arc<InFlightLimit>,
    pub cache: Option<Arc<ResponseCache>>,
}

impl ChatHandle {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            policy: RetryPolicy::default(),
            limit: Arc::new(InFlightLimit::new(8)),
            cache: None,
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_limit(mut self, limit: Arc<InFlightLimit>) -> Self {
        self.limit = limit;
        self
    }

    pub fn id(&self) -> &str {
        self.backend.id()
    }

    pub fn complete(
        &self,
        request: &GenerationRequest,
    ) -> Result<GenerationResponse, BackendError> {
        match &self.cache {
            Some(cache) => {
                let key = CacheKey::for_chat(self.backend.id(), request);
                cache.cached_call(&key, request, self)
            }
            None => self.complete_uncached(request),
        }
    }

    pub(crate) fn complete_uncached(
        &self,
        request: &GenerationRequest,
    ) -> Result<GenerationResponse, BackendError> {
        self.limit
            .run(|| chat_complete(request, self.backend.as_ref(), &self.policy))
    }
}

#[derive(Clone)]
pub struct RewardHandle {
    pub backend: Arc<dyn RewardBackend>,
    pub policy: RetryPolicy,
    pub limit: Arc<InFlightLimit>,
    pub cache: Option<Arc<ResponseCache>>,
}

impl RewardHandle {
    pub fn new(backend: Arc<dyn RewardBackend>) -> Self {
        Self {
            backend,
            policy: RetryPolicy::default(),
            limit: Arc::new(InFlightLimit::new(8)),
            cache: None,
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_limit(mut self, limit: Arc<InFlightLimit>) -> Self {
        self.limit = limit;
        self
    }

    pub fn score(&self, context: &str, answer: &str) -> Result<f64, BackendError> {
        let call = || {
            self.limit
                .run(|| self.policy.run(|| self.backend.score(context, answer)))
        };
        match &self.cache {
            Some(cache) => {
                let key = CacheKey::for_reward(self.backend.id(), context, answer);
                cache.cached_value(&key, call)
            }
            None => call(),
        }
    }
}
