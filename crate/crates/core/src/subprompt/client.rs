//! Blocking client for OpenAI-compatible chat-completion endpoints.
//!
//! The HTTP layer sits behind [`ChatTransport`] so tests can run against an
//! in-memory fake. Retries cover network failures, 429 and 5xx replies.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use super::parser::ParseError;

pub const API_KEY_ENV: &str = "SCOPE_LLM_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("environment variable {API_KEY_ENV} is not set; export it with your API key")]
    MissingApiKey,
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("API returned HTTP {status} after {attempts} attempt(s): {body}")]
    Api {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed API response: {0}")]
    MalformedResponse(String),
    #[error("completion was empty")]
    EmptyCompletion,
    #[error("could not parse sub-prompt list: {0}")]
    Parse(#[from] ParseError),
    #[error("expected {expected} sub-prompts, got {found}")]
    CountMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct TransportError(pub String);

/// Sends one JSON POST and returns the raw reply, whatever its status.
pub trait ChatTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

/// [`ChatTransport`] over `ureq`.
#[derive(Debug, Default)]
pub struct UreqTransport;

impl ChatTransport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: &str,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut response = agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .send_json(body)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmClientConfig {
    pub base_url: String,
    pub api_key: String,
    pub model_name: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub temperature: f64,
    /// Delay before the first retry; doubles on each further attempt.
    pub retry_backoff: Duration,
    pub max_in_flight: usize,
}

impl LlmClientConfig {
    pub fn new(api_key: impl Into<String>) -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.into(),
            api_key: api_key.into(),
            model_name: DEFAULT_MODEL.into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            temperature: 0.0,
            retry_backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    /// Default configuration with the key taken from `SCOPE_LLM_API_KEY`.
    pub fn from_env() -> Result<Self, LlmError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Ok(Self::new(key)),
            _ => Err(LlmError::MissingApiKey),
        }
    }

    pub fn check(&self) -> Result<(), LlmError> {
        if self.timeout.is_zero() {
            return Err(LlmError::Precondition("timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LlmError::Precondition("max_in_flight must be positive".into()));
        }
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Precondition("base_url is empty".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

struct InFlightLimiter {
    active: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a InFlightLimiter);

impl InFlightLimiter {
    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("limiter poisoned");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("limiter poisoned");
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock().expect("limiter poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmClient<T = UreqTransport> {
    config: LlmClientConfig,
    transport: T,
    limiter: InFlightLimiter,
}

impl LlmClient<UreqTransport> {
    pub fn new(config: LlmClientConfig) -> Result<Self, LlmError> {
        Self::with_transport(config, UreqTransport)
    }
}

impl<T: ChatTransport> LlmClient<T> {
    pub fn with_transport(config: LlmClientConfig, transport: T) -> Result<Self, LlmError> {
        config.check()?;
        let limit = config.max_in_flight;
        Ok(Self {
            config,
            transport,
            limiter: InFlightLimiter {
                active: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
        })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Send a system instruction plus one user message; return the trimmed
    /// text of the first choice.
    pub fn complete(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
        });
        let url = self.config.endpoint();
        let _permit = self.limiter.acquire();
        let attempts = self.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome =
                self.transport
                    .post_json(&url, &self.config.api_key, &body, self.config.timeout);
            let retryable = match &outcome {
                Err(_) => true,
                Ok(reply) => reply.status == 429 || reply.status >= 500,
            };
            if retryable && attempt < attempts {
                let delay = self.config.retry_backoff * 2u32.saturating_pow(attempt - 1).min(16);
                log::warn!("chat completion attempt {attempt}/{attempts} failed; retrying in {delay:?}");
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                continue;
            }
            return match outcome {
                Err(e) => Err(LlmError::Network {
                    attempts: attempt,
                    message: e.0,
                }),
                Ok(reply) if !(200..300).contains(&reply.status) => Err(LlmError::Api {
                    status: reply.status,
                    attempts: attempt,
                    body: reply.body,
                }),
                Ok(reply) => extract_content(&reply.body),
            };
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

fn extract_content(body: &str) -> Result<String, LlmError> {
    let parsed: CompletionResponse =
        serde_json::from_str(body).map_err(|e| LlmError::MalformedResponse(e.to_string()))?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .unwrap_or_default();
    let trimmed = content.trim();
    if trimmed.is_empty() {
        return Err(LlmError::EmptyCompletion);
    }
    Ok(trimmed.to_string())
}
