use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use agent_forest::agent::{
    ChatBackend, MockBackend, PromptSet, RemoteChatBackend, RemoteChatConfig,
};
use agent_forest::embedding::{
    CachedEmbedder, Embedder, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig,
};
use agent_forest::eval::{
    evaluate, load_dataset, EvalResult, EvalSummary, LoadMode, RunFault, RunOutput,
};
use agent_forest::http::EndpointConfig;
use agent_forest::pipeline::{Engine, Method};
use agent_forest::text::WhitespaceTokenizer;
use serde::Serialize;
use serde_json::json;

use crate::config::{BackendProvider, EmbedderProvider, RunConfig};
use crate::{io_err, CliError, TOOL_NAME, TOOL_VERSION};

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub results: Vec<EvalResult>,
    pub summary: EvalSummary,
    pub table: String,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.summary.failures
    }
}

pub(crate) fn build_embedder(cfg: &RunConfig) -> Result<Box<dyn Embedder<f64>>, CliError> {
    let e = &cfg.embedder;
    Ok(match e.provider {
        EmbedderProvider::Hash => Box::new(HashEmbedder::new(e.dim, e.seed)),
        EmbedderProvider::Remote => {
            let mut rc = RemoteEmbedderConfig::new(e.endpoint.clone(), e.model.clone(), e.dim);
            rc.endpoint.api_key_env = e.api_key_env.clone();
            let remote =
                RemoteEmbedder::new(rc).map_err(|err| CliError::Provider(err.to_string()))?;
            Box::new(CachedEmbedder::new(remote))
        }
    })
}

fn build_backend(cfg: &RunConfig) -> Result<Box<dyn ChatBackend>, CliError> {
    let b = &cfg.backend;
    Ok(match b.provider {
        BackendProvider::Mock => Box::new(MockBackend::new()),
        BackendProvider::Remote => {
            let rc = RemoteChatConfig {
                endpoint: EndpointConfig {
                    base_url: b.endpoint.clone(),
                    model: b.model.clone(),
                    api_key_env: b.api_key_env.clone(),
                    timeout_secs: b.timeout_secs,
                },
                ..RemoteChatConfig::new(b.endpoint.clone(), b.model.clone())
            };
            Box::new(RemoteChatBackend::new(rc).map_err(|err| CliError::Provider(err.to_string()))?)
        }
    })
}

/// Embedder that refuses to work; for methods that never embed.
struct Unused;

impl Embedder<f64> for Unused {
    fn embed_batch(
        &self,
        _: &[String],
    ) -> Result<Vec<agent_forest::Embedding>, agent_forest::embedding::EmbeddingError> {
        Err(agent_forest::embedding::EmbeddingError::Empty)
    }
    fn dim(&self) -> usize {
        0
    }
    fn identity(&self) -> String {
        "none".into()
    }
}

fn file_stem_for(index: usize, record_id: &str, seed: u64) -> String {
    let safe: String = record_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    format!("r{index:05}-{safe}-s{seed}.jsonl")
}

#[derive(Serialize)]
struct Timing {
    record_id: String,
    seed: u64,
    millis: u128,
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Per-dataset mean F1 table, in percent.
pub fn format_table(summary: &EvalSummary) -> String {
    let seeds: Vec<String> = summary.seeds.iter().map(u64::to_string).collect();
    let mut out = format!("method: {}   seeds: {}\n", summary.method, seeds.join(","));
    out.push_str(&format!(
        "{:<24} {:>7} {:>9} {:>7} {:>8}\n",
        "dataset", "records", "mean F1", "s.e.", "failed"
    ));
    for d in &summary.datasets {
        out.push_str(&format!(
            "{:<24} {:>7} {:>9.2} {:>7.2} {:>8}\n",
            d.dataset,
            d.records,
            100.0 * d.mean_f1,
            100.0 * d.std_error,
            d.failures
        ));
    }
    out.push_str(&format!(
        "{:<24} {:>7} {:>9.2}\n",
        "average",
        "",
        100.0 * summary.average
    ));
    out
}

/// Loads the config (with overrides) and executes it.
pub fn cmd_run(config_path: &Path, overrides: &[String]) -> Result<RunOutcome, CliError> {
    let cfg = RunConfig::load(config_path, overrides)?;
    run_config(&cfg)
}

/// Runs `cfg.method` over every record and seed and persists the run.
/// Credentials are checked before the dataset is touched.
pub fn run_config(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let backend = build_backend(cfg)?;
    let embedder: Box<dyn Embedder<f64>> = match cfg.method {
        Method::Goa | Method::Rag => build_embedder(cfg)?,
        _ => Box::new(Unused),
    };

    let mode = if cfg.lenient {
        LoadMode::Lenient
    } else {
        LoadMode::Strict
    };
    let dataset = load_dataset(&cfg.dataset, mode).map_err(|e| CliError::Dataset(e.to_string()))?;
    for skipped in &dataset.skipped {
        log::warn!("skipped dataset line: {skipped}");
    }

    let dir = cfg.output_dir.clone();
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|e| io_err(&traces_dir, e))?;
    // Traces from an earlier run into the same directory would be mistaken for this run's.
    for entry in fs::read_dir(&traces_dir).map_err(|e| io_err(&traces_dir, e))? {
        let path = entry.map_err(|e| io_err(&traces_dir, e))?.path();
        if path.extension().is_some_and(|x| x == "jsonl") {
            fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
        }
    }
    write(&dir.join("config.toml"), &cfg.to_toml())?;

    let prompts = PromptSet::builtin();
    let tokenizer = WhitespaceTokenizer;
    let timings = Mutex::new(Vec::new());
    let started = Instant::now();

    let (results, summary) = evaluate(
        &dataset.records,
        cfg.method.as_str(),
        &cfg.seeds,
        cfg.max_parallel,
        |record, seed| {
            let agent_cfg = cfg.agent_config(seed);
            let engine = Engine::new(
                &agent_cfg,
                embedder.as_ref(),
                backend.as_ref(),
                &tokenizer,
                &prompts,
            );
            let t0 = Instant::now();
            let outcome = engine.run(cfg.method, &record.context, &record.input);
            timings.lock().expect("timings lock").push(Timing {
                record_id: record.record_id.clone(),
                seed,
                millis: t0.elapsed().as_millis(),
            });
            let index = dataset
                .records
                .iter()
                .position(|r| std::ptr::eq(r, record))
                .unwrap_or(0);
            let name = file_stem_for(index, &record.record_id, seed);
            let trace_ref = format!("traces/{name}");
            let (trace, fault) = match outcome {
                Ok(trace) => (trace, None),
                Err(failure) => (*failure.partial, Some(failure.error.to_string())),
            };
            let persisted = fs::write(traces_dir.join(&name), trace.to_jsonl());
            match (fault, persisted) {
                (None, Ok(())) => Ok(RunOutput {
                    prediction: trace.answer,
                    trace_ref: Some(trace_ref),
                }),
                (Some(message), Ok(())) => {
                    log::warn!("{} seed {seed} failed: {message}", record.record_id);
                    Err(RunFault {
                        message,
                        trace_ref: Some(trace_ref),
                    })
                }
                (_, Err(e)) => Err(RunFault {
                    message: format!("cannot write trace: {e}"),
                    trace_ref: None,
                }),
            }
        },
    );

    let results_text: String = results
        .iter()
        .map(|r| serde_json::to_string(r).expect("results serialize") + "\n")
        .collect();
    write(&dir.join("results.jsonl"), &results_text)?;
    let summary_doc = json!({
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "method": cfg.method,
        "seeds": cfg.seeds,
        "records": dataset.records.len(),
        "skipped_lines": dataset.skipped.len(),
        "summary": summary,
    });
    write(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary_doc).expect("summary") + "\n"),
    )?;
    let mut timings = timings.into_inner().expect("timings lock");
    timings.sort_by(|a, b| (&a.record_id, a.seed).cmp(&(&b.record_id, b.seed)));
    let timing_doc = json!({ "total_millis": started.elapsed().as_millis(), "cells": timings });
    write(
        &dir.join("timings.json"),
        &(serde_json::to_string_pretty(&timing_doc).expect("timings") + "\n"),
    )?;

    if !results.is_empty() && summary.failures == results.len() {
        let first = results
            .iter()
            .find_map(|r| r.error.clone())
            .unwrap_or_default();
        return Err(CliError::Provider(format!(
            "all {} runs failed; first error: {first}",
            results.len()
        )));
    }
    if summary.failures > 0 {
        log::warn!(
            "{} of {} runs failed and were scored 0",
            summary.failures,
            results.len()
        );
    }
    let table = format_table(&summary);
    Ok(RunOutcome {
        dir,
        results,
        summary,
        table,
    })
}
