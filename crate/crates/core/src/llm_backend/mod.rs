//! Text-generation backends: an HTTP client for OpenAI-compatible completion
//! servers and a deterministic mock.

mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain_model::NodeKind;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{Lexicon, MockBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("backend returned only empty completions")]
    EmptyCompletion,
    #[error("lexicon has no entries for {0}")]
    EmptyLexicon(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::RateLimited { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub n: u32,
    pub best_of: u32,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.n < 1 {
            return Err(LlmError::InvalidRequest("n must be at least 1".into()));
        }
        if self.best_of < self.n {
            return Err(LlmError::InvalidRequest(format!(
                "best_of ({}) must be at least n ({})",
                self.best_of, self.n
            )));
        }
        if self.max_tokens < 1 {
            return Err(LlmError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_n(mut self, n: u32) -> Self {
        self.n = n;
        self.best_of = self.best_of.max(n);
        self
    }
}

pub const DEFAULT_MODEL: &str = "text-davinci-002";

/// Sampling parameters used when collecting each node kind.
pub fn default_params(kind: NodeKind) -> GenerationParams {
    let n = match kind {
        NodeKind::Situation | NodeKind::Emotion => 1,
        NodeKind::Clue | NodeKind::Thought | NodeKind::Action => 3,
    };
    GenerationParams {
        n,
        best_of: n,
        model: DEFAULT_MODEL.to_string(),
        temperature: 1.0,
        max_tokens: 256,
        top_p: 1.0,
        frequency_penalty: 0.0,
        presence_penalty: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub params: GenerationParams,
    pub stop: Vec<String>,
    /// Distinguishes repeated sampling rounds of the same prompt. Deterministic
    /// backends mix it into their seed; remote backends ignore it.
    #[serde(default)]
    pub round: u32,
}

impl GenerationRequest {
    /// Request with the default newline stop sequence.
    pub fn new(prompt: impl Into<String>, params: GenerationParams) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            params,
            stop: vec!["\n".to_string()],
            round: 0,
        }
    }

    pub fn with_round(mut self, round: u32) -> Self {
        self.round = round;
        self
    }

    pub fn with_stop(mut self, stop: Vec<String>) -> Self {
        self.stop = stop;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub completions: Vec<String>,
    pub backend: String,
    pub latency: Duration,
}

/// Input convention a backend expects at inference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendCapability {
    /// A general language model driven by natural-language test prompts.
    RawLm,
    /// A model fine-tuned on control-token inputs.
    ControlTokens,
}

pub trait Backend: Send + Sync {
    fn label(&self) -> &str;

    fn capability(&self) -> BackendCapability {
        BackendCapability::RawLm
    }

    /// Raw completion texts, one per requested candidate.
    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError>;
}

/// Strips leading whitespace, cuts at the first stop sequence, then trims.
pub fn clean_completion(raw: &str, stop: &[String]) -> String {
    let text = raw.trim_start();
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].trim().to_string()
}

/// Runs `request` against `backend` and post-processes the completions.
///
/// Individual completions may come back empty; only an all-empty result is an error.
pub fn generate(backend: &dyn Backend, request: &GenerationRequest) -> Result<GenerationResult, LlmError> {
    if request.prompt.trim().is_empty() {
        return Err(LlmError::InvalidRequest("prompt is empty".into()));
    }
    request.params.validate()?;
    let start = Instant::now();
    let raw = backend.complete(request)?;
    if raw.len() != request.params.n as usize {
        return Err(LlmError::BadResponse(format!(
            "expected {} completions, got {}",
            request.params.n,
            raw.len()
        )));
    }
    let completions: Vec<String> = raw.iter().map(|r| clean_completion(r, &request.stop)).collect();
    if completions.iter().all(String::is_empty) {
        return Err(LlmError::EmptyCompletion);
    }
    Ok(GenerationResult {
        completions,
        backend: backend.label().to_string(),
        latency: start.elapsed(),
    })
}

/// Wraps a backend and counts the requests passed through it.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B: Backend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn capability(&self) -> BackendCapability {
        self.inner.capability()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn label(&self) -> &str {
        (**self).label()
    }

    fn capability(&self) -> BackendCapability {
        (**self).capability()
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        (**self).complete(request)
    }
}
