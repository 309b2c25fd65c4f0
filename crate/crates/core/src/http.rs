//! Blocking JSON-over-HTTP with retry, shared by the remote embedder and the
//! remote chat backend.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProviderError {
    #[error("credential environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider error: {0}")]
    Provider(String),
}

/// Exponential backoff: attempt `n` (0-based) sleeps `base_delay * 2^n`
/// before the next try.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl RetryPolicy {
    pub fn new(max_attempts: u32, base_delay_ms: u64) -> Self {
        Self {
            max_attempts: max_attempts.max(1),
            base_delay_ms,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << attempt.min(16)))
    }
}

/// Endpoint settings common to both remote clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl EndpointConfig {
    /// Reads the credential from the configured environment variable.
    pub fn api_key(&self) -> Result<String, ProviderError> {
        match std::env::var(&self.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(key),
            _ => Err(ProviderError::AuthMissing(self.api_key_env.clone())),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

fn transient(status: reqwest::StatusCode) -> bool {
    status == reqwest::StatusCode::TOO_MANY_REQUESTS
        || status == reqwest::StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
}

#[derive(Debug, Clone)]
pub(crate) struct JsonClient {
    client: reqwest::blocking::Client,
    api_key: String,
    retry: RetryPolicy,
}

impl JsonClient {
    pub(crate) fn new(
        api_key: String,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Provider(e.to_string()))?;
        Ok(Self {
            client,
            api_key,
            retry,
        })
    }

    /// POSTs `body`, retrying on 408/429/5xx, timeouts and connection errors.
    pub(crate) fn post(&self, url: &str, body: &Value) -> Result<Value, ProviderError> {
        let mut last = ProviderError::Provider("no attempt made".into());
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            let sent = self
                .client
                .post(url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send();
            match sent {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.json::<Value>().map_err(|e| {
                            ProviderError::Provider(format!("bad response body: {e}"))
                        });
                    }
                    let text = resp.text().unwrap_or_default();
                    last = ProviderError::Provider(format!("HTTP {status}: {text}"));
                    if !transient(status) {
                        return Err(last);
                    }
                    log::warn!("{url}: HTTP {status}, attempt {}", attempt + 1);
                }
                Err(e) if e.is_timeout() => {
                    last = ProviderError::Timeout {
                        attempts: attempt + 1,
                    };
                }
                Err(e) if e.is_connect() || e.is_request() => {
                    last = ProviderError::Provider(e.to_string());
                }
                Err(e) => return Err(ProviderError::Provider(e.to_string())),
            }
        }
        Err(last)
    }
}
