use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use agent_forest::agent::{ChatBackend, GenerateRequest, RemoteChatBackend, RemoteChatConfig};
use agent_forest::embedding::{Embedder, EmbeddingError, RemoteEmbedder, RemoteEmbedderConfig};
use agent_forest::http::{ProviderError, RetryPolicy};
use serde_json::{json, Value};

type Log = Arc<Mutex<Vec<(String, Value)>>>;

/// Serves `requests` HTTP requests on a local port; `respond` maps
/// (request number, path, body) to (status, body).
fn serve<F>(requests: usize, respond: F) -> (String, Log, thread::JoinHandle<()>)
where
    F: Fn(usize, &str, &Value) -> (u16, Value) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let log: Log = Arc::default();
    let seen = Arc::clone(&log);
    let handle = thread::spawn(move || {
        for n in 0..requests {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let path = request_line
                .split_whitespace()
                .nth(1)
                .unwrap_or("")
                .to_string();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        length = v.trim().parse().unwrap();
                    }
                }
            }
            let mut body = vec![0u8; length];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap();
            let (status, reply) = respond(n, &path, &body);
            seen.lock().unwrap().push((path, body));
            let reply = reply.to_string();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
    });
    (base, log, handle)
}

fn embedding_reply(body: &Value, dim: usize) -> Value {
    let inputs = body["input"].as_array().unwrap();
    // Returned in reverse order to exercise index-based reassembly.
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .rev()
        .map(|(i, _)| {
            let mut v = vec![0.0; dim];
            v[i % dim] = 2.0;
            json!({ "index": i, "embedding": v })
        })
        .collect();
    json!({ "data": data })
}

fn fast(mut cfg: RemoteEmbedderConfig) -> RemoteEmbedderConfig {
    cfg.retry = RetryPolicy::new(3, 1);
    cfg
}

#[test]
fn embedder_batches_and_reorders() {
    let (base, log, server) = serve(3, |_, _, body| (200, embedding_reply(body, 8)));
    let embedder = RemoteEmbedder::with_api_key(
        fast(RemoteEmbedderConfig::new(base, "embed-m", 8)),
        "k".into(),
    )
    .unwrap();
    let texts: Vec<String> = (0..130).map(|i| format!("text {i}")).collect();
    let out = Embedder::<f64>::embed_batch(&embedder, &texts).unwrap();
    server.join().unwrap();
    assert_eq!(out.len(), 130);
    // Item 65 is the second item of the second batch: basis vector 1, normalized.
    assert_eq!(out[65].values()[1], 1.0);
    let sizes: Vec<usize> = log
        .lock()
        .unwrap()
        .iter()
        .map(|(_, b)| b["input"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![64, 64, 2]);
    let (path, body) = &log.lock().unwrap()[0];
    assert_eq!(path, "/embeddings");
    assert_eq!(body["model"], "embed-m");
}

#[test]
fn embedder_retries_then_reports_provider_error() {
    let (base, log, server) = serve(3, |_, _, _| (429, json!({ "error": "slow down" })));
    let embedder =
        RemoteEmbedder::with_api_key(fast(RemoteEmbedderConfig::new(base, "m", 8)), "k".into())
            .unwrap();
    let err = Embedder::<f64>::embed(&embedder, "hello").unwrap_err();
    server.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 3);
    assert!(
        matches!(err, EmbeddingError::Provider(ProviderError::Provider(ref m)) if m.contains("429")),
        "{err:?}"
    );
}

#[test]
fn embedder_recovers_after_transient_failure() {
    let (base, _, server) = serve(2, |n, _, body| {
        if n == 0 {
            (503, json!({}))
        } else {
            (200, embedding_reply(body, 8))
        }
    });
    let embedder =
        RemoteEmbedder::with_api_key(fast(RemoteEmbedderConfig::new(base, "m", 8)), "k".into())
            .unwrap();
    let v = Embedder::<f32>::embed(&embedder, "hello").unwrap();
    server.join().unwrap();
    assert_eq!(v.dim(), 8);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, log, server) = serve(1, |_, _, _| (400, json!({ "error": "bad" })));
    let embedder =
        RemoteEmbedder::with_api_key(fast(RemoteEmbedderConfig::new(base, "m", 8)), "k".into())
            .unwrap();
    assert!(Embedder::<f64>::embed(&embedder, "x").is_err());
    server.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn wrong_dimension_is_rejected() {
    let (base, _, server) = serve(1, |_, _, body| (200, embedding_reply(body, 4)));
    let embedder =
        RemoteEmbedder::with_api_key(fast(RemoteEmbedderConfig::new(base, "m", 8)), "k".into())
            .unwrap();
    let err = Embedder::<f64>::embed(&embedder, "x").unwrap_err();
    server.join().unwrap();
    assert_eq!(err, EmbeddingError::DimensionMismatch(8, 4));
}

#[test]
fn chat_backend_sends_one_user_message() {
    let (base, log, server) = serve(1, |_, _, _| {
        (
            200,
            json!({ "choices": [{ "message": { "role": "assistant", "content": "<answer>Oslo</answer>" } }] }),
        )
    });
    let mut cfg = RemoteChatConfig::new(base, "chat-m");
    cfg.retry = RetryPolicy::new(4, 1);
    let backend = RemoteChatBackend::with_api_key(cfg, "k".into()).unwrap();
    let request = GenerateRequest {
        prompt: "Question?".into(),
        max_output_tokens: 128,
        temperature: 0.1,
        top_p: 0.9,
        seed: Some(3),
    };
    assert_eq!(backend.generate(&request).unwrap(), "<answer>Oslo</answer>");
    server.join().unwrap();
    let (path, body) = log.lock().unwrap()[0].clone();
    assert_eq!(path, "/chat/completions");
    assert_eq!(
        body,
        json!({
            "model": "chat-m",
            "messages": [{ "role": "user", "content": "Question?" }],
            "temperature": 0.1,
            "top_p": 0.9,
            "max_tokens": 128,
            "seed": 3
        })
    );
}

#[test]
fn chat_backend_gives_up_after_four_attempts() {
    let (base, log, server) = serve(4, |_, _, _| (500, json!({})));
    let mut cfg = RemoteChatConfig::new(base, "m");
    cfg.retry = RetryPolicy::new(4, 1);
    let backend = RemoteChatBackend::with_api_key(cfg, "k".into()).unwrap();
    let request = GenerateRequest {
        prompt: "p".into(),
        max_output_tokens: 4,
        temperature: 0.1,
        top_p: 0.9,
        seed: None,
    };
    assert!(backend.generate(&request).is_err());
    server.join().unwrap();
    assert_eq!(log.lock().unwrap().len(), 4);
}

#[test]
fn missing_credentials_fail_before_any_request() {
    let mut cfg = RemoteChatConfig::new("http://127.0.0.1:9", "m");
    cfg.endpoint.api_key_env = "AGENT_FOREST_TEST_UNSET_KEY".into();
    assert_eq!(
        RemoteChatBackend::new(cfg).err(),
        Some(ProviderError::AuthMissing(
            "AGENT_FOREST_TEST_UNSET_KEY".into()
        ))
    );
}
