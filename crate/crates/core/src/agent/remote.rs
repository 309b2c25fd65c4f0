use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, GenerateRequest};
use crate::http::{EndpointConfig, JsonClient, ProviderError, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    pub endpoint: EndpointConfig,
    pub retry: RetryPolicy,
}

impl RemoteChatConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: EndpointConfig {
                base_url: base_url.into(),
                model: model.into(),
                api_key_env: "LLM_API_KEY".into(),
                timeout_secs: 120,
            },
            // One attempt plus up to three retries.
            retry: RetryPolicy::new(4, 1000),
        }
    }
}

/// Client for an OpenAI-style `POST {base}/chat/completions` endpoint. Each
/// prompt is sent as a single user message.
pub struct RemoteChatBackend {
    config: RemoteChatConfig,
    client: JsonClient,
}

impl RemoteChatBackend {
    /// Fails with `AuthMissing` when the credential variable is unset.
    pub fn new(config: RemoteChatConfig) -> Result<Self, ProviderError> {
        let key = config.endpoint.api_key()?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: RemoteChatConfig, api_key: String) -> Result<Self, ProviderError> {
        let client = JsonClient::new(
            api_key,
            Duration::from_secs(config.endpoint.timeout_secs),
            config.retry,
        )?;
        Ok(Self { config, client })
    }

    pub fn request_body(&self, request: &GenerateRequest) -> Value {
        request_body(&self.config.endpoint.model, request)
    }
}

pub(crate) fn request_body(model: &str, request: &GenerateRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_output_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

impl ChatBackend for RemoteChatBackend {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        let resp = self.client.post(
            &self.config.endpoint.url("chat/completions"),
            &self.request_body(request),
        )?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                ProviderError::Provider("response has no choices[0].message.content".into()).into()
            })
    }

    fn identity(&self) -> String {
        format!("remote/{}", self.config.endpoint.model)
    }
}
