//! Chat-completions wire codec and blocking HTTP backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    BackendError, ChatBackend, GenerationRequest, GenerationResponse, RewardBackend, TokenLogprob,
    TopLogprob,
};

/// Number of alternatives requested per position when logprobs are wanted.
pub const TOP_LOGPROBS: u32 = 5;

pub fn encode_chat_request(model: &str, request: &GenerationRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": request.messages,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_tokens,
    });
    if request.want_logprobs {
        body["logprobs"] = json!(true);
        body["top_logprobs"] = json!(TOP_LOGPROBS);
    }
    if let Some(seed) = request.seed_hint {
        body["seed"] = json!(seed);
    }
    body
}

/// Builds a reply body in the wire shape. Used by the mocks and tests.
pub fn encode_chat_response(text: &str, logprobs: Option<&[TokenLogprob]>) -> Value {
    let mut choice = json!({
        "index": 0,
        "message": {"role": "assistant", "content": text},
        "finish_reason": "stop",
    });
    if let Some(lps) = logprobs {
        let content: Vec<Value> = lps
            .iter()
            .map(|t| {
                json!({
                    "token": t.token,
                    "logprob": t.logprob,
                    "top_logprobs": t.top.iter().map(|a| json!({"token": a.token, "logprob": a.logprob})).collect::<Vec<_>>(),
                })
            })
            .collect();
        choice["logprobs"] = json!({ "content": content });
    }
    json!({ "object": "chat.completion", "choices": [choice] })
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<WireToken>>,
}

#[derive(Deserialize)]
struct WireToken {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<WireTop>,
}

#[derive(Deserialize)]
struct WireTop {
    token: String,
    logprob: f64,
}

pub fn decode_chat_response(
    backend_id: &str,
    raw: &str,
) -> Result<GenerationResponse, BackendError> {
    let protocol = |reason: String| BackendError::Protocol {
        reason,
        raw: raw.to_string(),
    };
    let reply: WireReply = serde_json::from_str(raw).map_err(|e| protocol(e.to_string()))?;
    let choice = reply
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| protocol("no choices".into()))?;
    let text = choice
        .message
        .content
        .ok_or_else(|| protocol("choice has no message content".into()))?;
    let token_logprobs = match choice.logprobs.and_then(|l| l.content) {
        None => None,
        Some(tokens) => {
            let mut out = Vec::with_capacity(tokens.len());
            for t in tokens {
                if !(t.logprob <= 0.0) || t.top_logprobs.iter().any(|a| !(a.logprob <= 0.0)) {
                    return Err(protocol(format!(
                        "log-probability above zero for token {:?}",
                        t.token
                    )));
                }
                out.push(TokenLogprob {
                    token: t.token,
                    logprob: t.logprob,
                    top: t
                        .top_logprobs
                        .into_iter()
                        .map(|a| TopLogprob {
                            token: a.token,
                            logprob: a.logprob,
                        })
                        .collect(),
                });
            }
            Some(out)
        }
    };
    Ok(GenerationResponse {
        text,
        token_logprobs,
        backend_id: backend_id.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub base_url: String,
    #[serde(default = "default_chat_path")]
    pub path: String,
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_chat_path() -> String {
    "/v1/chat/completions".into()
}

fn default_timeout_secs() -> u64 {
    120
}

impl HttpEndpoint {
    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }

    fn bearer(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|k| !k.is_empty())
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(self.timeout_secs)))
            .build()
            .into()
    }

    fn post_json(&self, agent: &ureq::Agent, body: &Value) -> Result<String, BackendError> {
        let mut req = agent
            .post(self.url())
            .header("Content-Type", "application/json");
        if let Some(key) = self.bearer() {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        Ok(text)
    }
}

pub struct HttpChatBackend {
    id: String,
    endpoint: HttpEndpoint,
    agent: ureq::Agent,
}

impl HttpChatBackend {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        let id = format!("http:{}#{}", endpoint.url(), endpoint.model);
        let agent = endpoint.agent();
        Self {
            id,
            endpoint,
            agent,
        }
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest) -> Result<GenerationResponse, BackendError> {
        let body = encode_chat_request(&self.endpoint.model, request);
        let raw = self.endpoint.post_json(&self.agent, &body)?;
        decode_chat_response(&self.id, &raw)
    }
}

/// POST `{context, answer}` and read back `{score}`.
pub struct HttpRewardBackend {
    id: String,
    endpoint: HttpEndpoint,
    agent: ureq::Agent,
}

impl HttpRewardBackend {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        let id = format!("http-reward:{}#{}", endpoint.url(), endpoint.model);
        let agent = endpoint.agent();
        Self {
            id,
            endpoint,
            agent,
        }
    }
}

pub fn decode_reward_response(raw: &str) -> Result<f64, BackendError> {
    #[derive(Deserialize)]
    struct Reply {
        score: f64,
    }
    let reply: Reply = serde_json::from_str(raw).map_err(|e| BackendError::Protocol {
        reason: e.to_string(),
        raw: raw.to_string(),
    })?;
    if !reply.score.is_finite() {
        return Err(BackendError::Protocol {
            reason: "non-finite score".into(),
            raw: raw.to_string(),
        });
    }
    Ok(reply.score)
}

impl RewardBackend for HttpRewardBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, context: &str, answer: &str) -> Result<f64, BackendError> {
        let raw = self
            .endpoint
            .post_json(&self.agent, &json!({"context": context, "answer": answer}))?;
        decode_reward_response(&raw)
    }
}
