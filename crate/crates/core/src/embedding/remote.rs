use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Embedder, EmbeddingError, EmbeddingVector};
use crate::http::{EndpointConfig, JsonClient, ProviderError, RetryPolicy};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: EndpointConfig,
    pub dim: usize,
    pub max_batch: usize,
    /// Prepended to every text before it is sent; empty by default.
    pub prefix: String,
    pub retry: RetryPolicy,
}

impl RemoteEmbedderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: EndpointConfig {
                base_url: base_url.into(),
                model: model.into(),
                api_key_env: "EMBED_API_KEY".into(),
                timeout_secs: 60,
            },
            dim,
            max_batch: 64,
            prefix: String::new(),
            retry: RetryPolicy::new(3, 500),
        }
    }
}

/// Client for an OpenAI-style `POST {base}/embeddings` endpoint.
///
/// Request: `{"model": m, "input": [texts]}`.
/// Response: `{"data": [{"index": i, "embedding": [..]}, ..]}`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: JsonClient,
}

impl RemoteEmbedder {
    /// Fails with `AuthMissing` when the credential variable is unset.
    pub fn new(config: RemoteEmbedderConfig) -> Result<Self, ProviderError> {
        let key = config.endpoint.api_key()?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(
        config: RemoteEmbedderConfig,
        api_key: String,
    ) -> Result<Self, ProviderError> {
        let client = JsonClient::new(
            api_key,
            Duration::from_secs(config.endpoint.timeout_secs),
            config.retry,
        )?;
        Ok(Self { config, client })
    }

    fn request<S: Scalar>(
        &self,
        texts: &[String],
    ) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        let input: Vec<String> = texts
            .iter()
            .map(|t| format!("{}{t}", self.config.prefix))
            .collect();
        let body = json!({ "model": self.config.endpoint.model, "input": input });
        let resp = self
            .client
            .post(&self.config.endpoint.url("embeddings"), &body)?;
        parse_embeddings(&resp, texts.len())
    }
}

fn parse_embeddings<S: Scalar>(
    resp: &Value,
    expected: usize,
) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
    let bad = |msg: &str| EmbeddingError::Provider(ProviderError::Provider(msg.to_string()));
    let data = resp["data"]
        .as_array()
        .ok_or_else(|| bad("response has no `data` array"))?;
    if data.len() != expected {
        return Err(EmbeddingError::CountMismatch {
            expected,
            got: data.len(),
        });
    }
    let mut slots: Vec<Option<EmbeddingVector<S>>> = vec![None; expected];
    for (pos, item) in data.iter().enumerate() {
        let index = item["index"].as_u64().map_or(pos, |i| i as usize);
        let raw = item["embedding"]
            .as_array()
            .ok_or_else(|| bad("item has no `embedding` array"))?;
        let values = raw
            .iter()
            .map(|x| {
                x.as_f64()
                    .map(S::of)
                    .ok_or_else(|| bad("non-numeric embedding component"))
            })
            .collect::<Result<Vec<S>, _>>()?;
        let slot = slots
            .get_mut(index)
            .ok_or_else(|| bad("embedding index out of range"))?;
        *slot = Some(EmbeddingVector::from_raw(values)?);
    }
    slots
        .into_iter()
        .map(|s| s.ok_or_else(|| bad("duplicate embedding index")))
        .collect()
}

impl<S: Scalar> Embedder<S> for RemoteEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(ProviderError::Provider("cannot embed an empty text".into()).into());
        }
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.config.max_batch.max(1)) {
            out.extend(self.request::<S>(batch)?);
        }
        if let Some(v) = out.iter().find(|v| v.dim() != self.config.dim) {
            return Err(EmbeddingError::DimensionMismatch(self.config.dim, v.dim()));
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn identity(&self) -> String {
        format!("remote/{}", self.config.endpoint.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reorders_by_index() {
        let resp = json!({"data": [
            {"index": 1, "embedding": [0.0, 2.0]},
            {"index": 0, "embedding": [3.0, 0.0]},
        ]});
        let v: Vec<EmbeddingVector<f64>> = parse_embeddings(&resp, 2).unwrap();
        assert_eq!(v[0].values(), &[1.0, 0.0]);
        assert_eq!(v[1].values(), &[0.0, 1.0]);
    }

    #[test]
    fn parse_rejects_wrong_count() {
        let resp = json!({"data": [{"index": 0, "embedding": [1.0]}]});
        assert!(matches!(
            parse_embeddings::<f64>(&resp, 2),
            Err(EmbeddingError::CountMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn missing_credential_is_reported_without_io() {
        let mut cfg = RemoteEmbedderConfig::new("http://127.0.0.1:9", "m", 4);
        cfg.endpoint.api_key_env = "AGENT_FOREST_TEST_UNSET_EMBED_KEY".into();
        assert_eq!(
            RemoteEmbedder::new(cfg).err(),
            Some(ProviderError::AuthMissing(
                "AGENT_FOREST_TEST_UNSET_EMBED_KEY".into()
            ))
        );
    }
}
