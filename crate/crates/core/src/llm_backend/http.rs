use std::thread;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendCapability, GenerationRequest, LlmError};

/// Environment variable holding the bearer token for the completion endpoint.
pub const API_KEY_ENV: &str = "TOMFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint_url: String,
    pub max_concurrency: usize,
    /// Extra attempts after the first one for retryable failures.
    pub retries: u32,
    pub timeout_ms: u64,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint_url: "http://127.0.0.1:8000".to_string(),
            max_concurrency: 4,
            retries: 3,
            timeout_ms: 60_000,
            backoff_ms: 500,
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            available: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.available.lock();
        while *available == 0 {
            self.freed.wait(&mut available);
        }
        *available -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock() += 1;
        self.0.freed.notify_one();
    }
}

/// Client for an OpenAI-compatible `/v1/completions` endpoint.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    permits: Semaphore,
    capability: BackendCapability,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    text: String,
}

enum Attempt {
    Done(Vec<String>),
    Retry(LlmError),
    Fail(LlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig, api_key: Option<String>) -> HttpBackend {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            permits: Semaphore::new(config.max_concurrency),
            config,
            api_key,
            agent,
            capability: BackendCapability::RawLm,
        }
    }

    /// Reads the credential from `TOMFORGE_API_KEY`.
    pub fn from_env(config: HttpConfig) -> HttpBackend {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        HttpBackend::new(config, key)
    }

    pub fn with_capability(mut self, capability: BackendCapability) -> Self {
        self.capability = capability;
        self
    }

    fn url(&self) -> String {
        format!("{}/v1/completions", self.config.endpoint_url.trim_end_matches('/'))
    }

    fn attempt(&self, request: &GenerationRequest) -> Attempt {
        let p = &request.params;
        let body = json!({
            "model": p.model,
            "prompt": request.prompt,
            "n": p.n,
            "best_of": p.best_of,
            "temperature": p.temperature,
            "max_tokens": p.max_tokens,
            "top_p": p.top_p,
            "frequency_penalty": p.frequency_penalty,
            "presence_penalty": p.presence_penalty,
            "stop": request.stop,
        });
        let mut call = self.agent.post(&self.url());
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match call.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LlmError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            429 => return Attempt::Retry(LlmError::RateLimited { attempts: 0 }),
            500..=599 => return Attempt::Retry(LlmError::Transport(format!("server error {status}"))),
            _ => {
                let text = response.body_mut().read_to_string().unwrap_or_default();
                return Attempt::Fail(LlmError::BadResponse(format!("status {status}: {text}")));
            }
        }
        let parsed: CompletionResponse = match response.body_mut().read_json() {
            Ok(p) => p,
            Err(e) => return Attempt::Fail(LlmError::BadResponse(e.to_string())),
        };
        let mut choices: Vec<(usize, String)> = parsed
            .choices
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c.index.unwrap_or(i), c.text))
            .collect();
        choices.sort_by_key(|(i, _)| *i);
        Attempt::Done(choices.into_iter().map(|(_, t)| t).collect())
    }
}

impl Backend for HttpBackend {
    fn label(&self) -> &str {
        "http"
    }

    fn capability(&self) -> BackendCapability {
        self.capability
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, LlmError> {
        let _permit = self.permits.acquire();
        let attempts = self.config.retries + 1;
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Attempt::Done(texts) => return Ok(texts),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    tracing::warn!(attempt, error = %e, "completion request failed");
                    if attempt == attempts {
                        return Err(match e {
                            LlmError::RateLimited { .. } => LlmError::RateLimited { attempts },
                            other => other,
                        });
                    }
                    thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}
