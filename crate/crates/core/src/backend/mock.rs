//! Deterministic in-process backends.
//!
//! Replies are rendered into the chat-completions body shape and decoded
//! with [`super::http::decode_chat_response`], so mocks exercise the same
//! codec as live endpoints.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::http::{decode_chat_response, encode_chat_response};
use super::{
    BackendError, ChatBackend, GenerationRequest, GenerationResponse, RewardBackend, TokenLogprob,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MockReply {
    pub text: String,
    pub logprobs: Option<Vec<TokenLogprob>>,
}

impl MockReply {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            logprobs: None,
        }
    }
}

type ReplyFn = dyn Fn(&GenerationRequest) -> Result<MockReply, BackendError> + Send + Sync;

enum Script {
    Cycle(Vec<String>),
    Func(Box<ReplyFn>),
}

pub struct ScriptedChat {
    id: String,
    script: Script,
    fail_first: usize,
    calls: AtomicUsize,
}

impl ScriptedChat {
    /// Replies with `replies[seed_hint % len]`, or by call order when the
    /// request carries no seed hint.
    pub fn cycling<S: Into<String>>(
        id: impl Into<String>,
        replies: impl IntoIterator<Item = S>,
    ) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "cycling mock needs at least one reply");
        Self {
            id: id.into(),
            script: Script::Cycle(replies),
            fail_first: 0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn from_fn<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&GenerationRequest) -> Result<MockReply, BackendError> + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            script: Script::Func(Box::new(f)),
            fail_first: 0,
            calls: AtomicUsize::new(0),
        }
    }

    /// The first `n` calls fail with a transport error.
    pub fn failing_first(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedChat {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        if call < self.fail_first {
            return Err(BackendError::Transport(format!(
                "scripted failure on call {}",
                call + 1
            )));
        }
        let reply = match &self.script {
            Script::Cycle(replies) => {
                let idx = request.seed_hint.map(|s| s as usize).unwrap_or(call);
                MockReply::text(replies[idx % replies.len()].clone())
            }
            Script::Func(f) => f(request)?,
        };
        let logprobs = if request.want_logprobs {
            reply.logprobs.as_deref()
        } else {
            None
        };
        let raw = encode_chat_response(&reply.text, logprobs).to_string();
        decode_chat_response(&self.id, &raw)
    }
}

type RewardFn = dyn Fn(&str, &str) -> Result<f64, BackendError> + Send + Sync;

pub struct ScriptedReward {
    id: String,
    f: Box<RewardFn>,
    calls: AtomicUsize,
}

impl ScriptedReward {
    pub fn from_fn<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&str, &str) -> Result<f64, BackendError> + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            f: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Scores an answer by `min(chars / 100, 1)`.
    pub fn length_rule(id: impl Into<String>) -> Self {
        Self::from_fn(id, |_, answer| {
            Ok((answer.chars().count() as f64 / 100.0).min(1.0))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl RewardBackend for ScriptedReward {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, context: &str, answer: &str) -> Result<f64, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(context, answer)
    }
}
