//! Sampling unique rewrites of a question from the initial rewriter.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{fan_out, BackendError, ChatHandle, GenerationRequest, Message};
use crate::domain::QuestionRecord;

/// Instruction placed before every question sent to the rewriter.
pub const REWRITE_INSTRUCTION: &str =
    "Rewriting question to make it more understandable, just give me the rewritten question without any other word:";

/// Separator between the instruction and the question.
pub const PROMPT_SEPARATOR: &str = "\n";

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("question text is empty")]
    EmptyQuestion,
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("generator failed on draw {draw_index}: {source}")]
    Generator {
        draw_index: u64,
        #[source]
        source: BackendError,
    },
}

pub fn render_rewrite_prompt(question: &str) -> Result<String, SamplingError> {
    if question.is_empty() {
        return Err(SamplingError::EmptyQuestion);
    }
    Ok(format!("{REWRITE_INSTRUCTION}{PROMPT_SEPARATOR}{question}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteCandidate {
    pub parent_id: String,
    pub text: String,
    /// 1-based attempt number that produced this text.
    pub draw_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub k_unique: usize,
    pub max_attempts: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            k_unique: 100,
            max_attempts: 10_000,
            top_p: 0.999,
            temperature: 1.0,
            max_tokens: 512,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |m: &str| Err(SamplingError::InvalidConfig(m.into()));
        if self.k_unique == 0 {
            return bad("k_unique must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        if self.k_unique > self.max_attempts {
            return bad("k_unique must not exceed max_attempts");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p must be in (0, 1]");
        }
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    fn request(&self, prompt: &str, draw_index: u64) -> GenerationRequest {
        GenerationRequest {
            messages: vec![Message::user(prompt)],
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            want_logprobs: false,
            seed_hint: Some(draw_index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingRun {
    pub candidates: Vec<RewriteCandidate>,
    /// Draws consumed before stopping.
    pub attempts: usize,
}

/// Draws rewrites until `k_unique` distinct trimmed texts exist or
/// `max_attempts` draws have been made.
///
/// Draws are issued in waves as wide as the generator's in-flight bound and
/// consumed in draw order, so the result does not depend on completion order.
pub fn sample_rewrites(
    question: &QuestionRecord,
    cfg: &SamplerConfig,
    generator: &ChatHandle,
) -> Result<SamplingRun, SamplingError> {
    cfg.validate()?;
    let prompt = render_rewrite_prompt(&question.text)?;
    let wave = generator.limit.limit();
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    let mut attempts = 0usize;
    'outer: while attempts < cfg.max_attempts {
        let start = attempts as u64 + 1;
        let n = wave.min(cfg.max_attempts - attempts);
        let replies = fan_out(n, wave, |i| {
            generator.complete(&cfg.request(&prompt, start + i as u64))
        });
        for (i, reply) in replies.into_iter().enumerate() {
            let draw_index = start + i as u64;
            attempts += 1;
            let reply = reply.map_err(|source| SamplingError::Generator { draw_index, source })?;
            let text = reply.text.trim();
            if !text.is_empty() && seen.insert(text.to_string()) {
                candidates.push(RewriteCandidate {
                    parent_id: question.id.clone(),
                    text: text.to_string(),
                    draw_index,
                });
                if candidates.len() == cfg.k_unique {
                    break 'outer;
                }
            }
        }
    }
    Ok(SamplingRun {
        candidates,
        attempts,
    })
}
