use std::sync::Arc;
use std::time::Duration;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ratelimit::{Clock, RateLimiter, SystemClock};
use super::RefineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    /// Requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub requests_per_minute: usize,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub backoff_base_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            temperature: 0.0,
            timeout_secs: 120,
            max_retries: 5,
            requests_per_minute: 60,
            api_key_env: "REFINE_API_KEY".into(),
            max_in_flight: 2,
            backoff_base_ms: 500,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.requests_per_minute == 0 {
            return Err(RefineError::InvalidConfig("requests_per_minute must be >= 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(RefineError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(RefineError::InvalidConfig("temperature must be a non-negative number".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmResponse {
    pub content: String,
    pub retries: usize,
}

/// Blocking single-turn chat client; every call is a fresh conversation.
pub struct LlmClient {
    cfg: EndpointConfig,
    token: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

enum Attempt {
    Done(String),
    Retry(u16),
}

impl LlmClient {
    /// Reads the token from the configured environment variable.
    pub fn from_env(cfg: EndpointConfig) -> Result<Self, RefineError> {
        let token = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| RefineError::AuthMissing(cfg.api_key_env.clone()))?;
        Self::with_clock(cfg, token, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(cfg: EndpointConfig, token: String, clock: Arc<dyn Clock>) -> Result<Self, RefineError> {
        cfg.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = RateLimiter::new(cfg.requests_per_minute, clock);
        Ok(Self { cfg, token, agent, limiter })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn call(&self, prompt: &str) -> Result<LlmResponse, RefineError> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.cfg.temperature,
        });
        let mut retries = 0;
        loop {
            self.limiter.acquire();
            match self.attempt(&body)? {
                Attempt::Done(content) => return Ok(LlmResponse { content, retries }),
                Attempt::Retry(status) if retries < self.cfg.max_retries => {
                    retries += 1;
                    let base = self.cfg.backoff_base_ms << (retries - 1).min(16);
                    let jitter = rand::rng().random_range(0..=self.cfg.backoff_base_ms);
                    log::warn!("status {status}, retry {retries}/{} after {} ms", self.cfg.max_retries, base + jitter);
                    self.limiter.clock().sleep(Duration::from_millis(base + jitter));
                }
                Attempt::Retry(429) => return Err(RefineError::RateLimitedExhausted(retries)),
                Attempt::Retry(status) => return Err(RefineError::HttpError(status)),
            }
        }
    }

    fn attempt(&self, body: &Value) -> Result<Attempt, RefineError> {
        let resp = self
            .agent
            .post(&self.cfg.url())
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(RefineError::Timeout),
            Err(e) => return Err(RefineError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 || (500..600).contains(&status) {
            return Ok(Attempt::Retry(status));
        }
        if !(200..300).contains(&status) {
            return Err(RefineError::HttpError(status));
        }
        let text = resp.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => RefineError::Timeout,
            e => RefineError::Transport(e.to_string()),
        })?;
        let v: Value = serde_json::from_str(&text).map_err(|e| RefineError::MalformedResponse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| Attempt::Done(s.to_string()))
            .ok_or_else(|| RefineError::MalformedResponse("missing choices[0].message.content".into()))
    }
}
