//! OpenAI-compatible chat-completions backend.
//!
//! One user message per window, text response parsed back into a ranking
//! with the repair rules, so a malformed reply degrades to a partial or
//! identity ordering instead of failing the pass. Retries with exponential
//! backoff on transport errors, timeouts, 429 and 5xx; other statuses fail
//! fast. In-flight requests per backend are capped with a condvar gate.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::core::{Passage, Query, Ranking};
use crate::defaults;
use crate::prompting::{parse_ranking, PromptTemplate};
use crate::seeding;

use super::{check_window, BackendFailure, BackendInfo, RerankerBackend, SamplingError};

/// Connection settings for one endpoint. Credentials are never stored in
/// config files: `credential_env` names an environment variable read once
/// at construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "EndpointConfig::default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "EndpointConfig::default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "EndpointConfig::default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "EndpointConfig::default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "EndpointConfig::default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "EndpointConfig::default_max_window")]
    pub max_window: usize,
}

impl EndpointConfig {
    fn default_max_output_tokens() -> u32 {
        defaults::MAX_OUTPUT_TOKENS
    }
    fn default_timeout_secs() -> u64 {
        defaults::REQUEST_TIMEOUT_SECS
    }
    fn default_max_attempts() -> u32 {
        defaults::RETRY_ATTEMPTS
    }
    fn default_backoff_ms() -> u64 {
        defaults::RETRY_BACKOFF_MS
    }
    fn default_max_in_flight() -> usize {
        defaults::MAX_IN_FLIGHT
    }
    fn default_max_window() -> usize {
        defaults::WINDOW
    }

    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            credential_env: None,
            temperature: 0.0,
            max_output_tokens: Self::default_max_output_tokens(),
            timeout_secs: Self::default_timeout_secs(),
            max_attempts: Self::default_max_attempts(),
            backoff_ms: Self::default_backoff_ms(),
            max_in_flight: Self::default_max_in_flight(),
            max_window: Self::default_max_window(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RemoteInitError {
    #[error("credential environment variable {var} is not set")]
    MissingCredential { var: String },
    #[error("invalid endpoint config: {0}")]
    BadConfig(String),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

/// Simple counting gate: blocks callers beyond `max` until a slot frees.
struct InFlightGate {
    active: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

impl InFlightGate {
    fn new(max: usize) -> Self {
        Self {
            active: Mutex::new(0),
            freed: Condvar::new(),
            max: max.max(1),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut active = self.active.lock().unwrap();
        while *active >= self.max {
            active = self.freed.wait(active).unwrap();
        }
        *active += 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a InFlightGate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.gate.active.lock().unwrap();
        *active -= 1;
        self.gate.freed.notify_one();
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

pub struct RemoteBackend {
    config: EndpointConfig,
    credential: Option<String>,
    template: PromptTemplate,
    client: reqwest::blocking::Client,
    gate: InFlightGate,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // never print the credential
        f.debug_struct("RemoteBackend")
            .field("base_url", &self.config.base_url)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    pub fn new(config: EndpointConfig) -> Result<Self, RemoteInitError> {
        if config.max_attempts == 0 {
            return Err(RemoteInitError::BadConfig(
                "max_attempts must be at least 1".to_string(),
            ));
        }
        if config.temperature < 0.0 {
            return Err(RemoteInitError::BadConfig(
                "temperature must be >= 0".to_string(),
            ));
        }
        let credential = match &config.credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                RemoteInitError::MissingCredential { var: var.clone() }
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()?;
        let template = PromptTemplate::rank_llm().with_max_window(config.max_window);
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(Self {
            config,
            credential,
            template,
            client,
            gate,
        })
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template.with_max_window(self.config.max_window);
        self
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// One HTTP round trip. `Ok` is the assistant text; `Err((failure, retryable))`.
    fn attempt(&self, body: &serde_json::Value) -> Result<String, (BackendFailure, bool)> {
        let _slot = self.gate.enter();
        let mut request = self.client.post(self.url()).json(body);
        if let Some(token) = &self.credential {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                (
                    BackendFailure::Timeout {
                        seconds: self.config.timeout_secs,
                    },
                    true,
                )
            } else {
                (BackendFailure::Transport(e.to_string()), true)
            }
        })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| (BackendFailure::Transport(e.to_string()), true))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err((
                BackendFailure::Transport(format!("HTTP {}: {}", status.as_u16(), snippet(&text))),
                retryable,
            ));
        }
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| {
            (
                BackendFailure::Transport(format!("bad response body ({e}): {}", snippet(&text))),
                true,
            )
        })?;
        let first = parsed.choices.into_iter().next().ok_or_else(|| {
            (
                BackendFailure::Transport(format!("response had no choices: {}", snippet(&text))),
                true,
            )
        })?;
        Ok(first.message.content)
    }

    /// Send with retries and return the assistant text.
    fn complete(&self, body: &serde_json::Value) -> Result<String, BackendFailure> {
        let mut last: Option<BackendFailure> = None;
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(body) {
                Ok(text) => return Ok(text),
                Err((failure, retryable)) => {
                    if !retryable {
                        return Err(failure);
                    }
                    tracing::warn!(attempt, error = %failure, "request attempt failed");
                    last = Some(failure);
                    if attempt < self.config.max_attempts {
                        let backoff = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
        let last = last.expect("at least one attempt ran");
        if self.config.max_attempts == 1 {
            return Err(last);
        }
        let raw = match &last {
            BackendFailure::Transport(msg) => Some(msg.clone()),
            _ => None,
        };
        Err(BackendFailure::ExhaustedRetries {
            attempts: self.config.max_attempts,
            last: last.to_string(),
            raw,
        })
    }

    fn request_body(&self, prompt: &str, sample_seed: Option<u64>) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        // best effort: compatible servers use it, others ignore it
        if let Some(seed) = sample_seed {
            body["seed"] = serde_json::json!(seed & 0x7fff_ffff);
        }
        body
    }

    fn rerank_once(
        &self,
        query: &Query,
        passages: &[Passage],
        sample_seed: Option<u64>,
    ) -> Result<Ranking, BackendFailure> {
        check_window(&self.info(), passages.len())?;
        let prompt = self
            .template
            .render(query, passages)
            .map_err(|e| BackendFailure::InvalidInput(e.to_string()))?;
        let body = self.request_body(&prompt, sample_seed);
        let text = self.complete(&body)?;
        let report = parse_ranking(&text, passages.len());
        if report.fallback {
            tracing::warn!(query = %query.id, raw = %snippet(&text), "no usable ids in response, using input order");
        }
        Ok(report.ranking)
    }
}

fn snippet(text: &str) -> String {
    const LIMIT: usize = 200;
    let trimmed = text.trim();
    let mut end = trimmed.len().min(LIMIT);
    while !trimmed.is_char_boundary(end) {
        end -= 1;
    }
    trimmed[..end].to_string()
}

impl RerankerBackend for RemoteBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            name: format!("remote:{}", self.config.model),
            max_window: self.config.max_window,
            supports_sampling: self.config.temperature > 0.0,
        }
    }

    fn rerank(&self, query: &Query, passages: &[Passage]) -> Result<Ranking, BackendFailure> {
        self.rerank_once(query, passages, None)
    }

    fn sample_rankings(
        &self,
        query: &Query,
        passages: &[Passage],
        m: usize,
        seed: u64,
    ) -> Result<Vec<Ranking>, SamplingError> {
        if m <= 1 {
            return Ok((0..m)
                .map(|_| self.rerank(query, passages))
                .collect::<Result<_, _>>()?);
        }
        if self.config.temperature <= 0.0 {
            return Err(BackendFailure::SamplingUnsupported {
                backend: self.info().name,
            }
            .into());
        }
        let mut samples = Vec::with_capacity(m);
        for i in 0..m {
            match self.rerank_once(query, passages, Some(seeding::mix(seed, i as u64))) {
                Ok(ranking) => samples.push(ranking),
                Err(cause) => {
                    return Err(SamplingError {
                        partial: samples,
                        cause,
                    })
                }
            }
        }
        Ok(samples)
    }
}
