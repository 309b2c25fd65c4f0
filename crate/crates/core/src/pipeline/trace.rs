//! Run records and their line-delimited JSON form.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::AgentRunConfig;
use crate::cluster::Partition;
use crate::forest::LinearForest;
use crate::retrieval::{RagOrder, Retriever};
use crate::scalar::Scalar;
use crate::text::Chunk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Goa,
    Vanilla,
    Rag,
    Coa,
    ParallelAgents,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Goa,
        Method::Vanilla,
        Method::Rag,
        Method::Coa,
        Method::ParallelAgents,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Goa => "goa",
            Method::Vanilla => "vanilla",
            Method::Rag => "rag",
            Method::Coa => "coa",
            Method::ParallelAgents => "parallel_agents",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Worker,
    Manager,
    /// Single direct-answer call of the truncation and retrieval baselines.
    Reader,
}

/// Lowercase hex SHA-256 of the prompt bytes.
pub fn prompt_hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One backend call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: AgentRole,
    /// Path (GoA cluster, CoA chain 0, or chunk id for parallel agents).
    pub path: Option<usize>,
    pub step: usize,
    pub chunk_id: Option<usize>,
    pub prompt_hash: String,
    pub prompt_tokens: usize,
    pub max_output_tokens: usize,
    pub output_tokens: usize,
    pub prompt: String,
    pub response: String,
}

/// What the retrieval baseline scored and kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RagSelection<S: Scalar> {
    pub retriever: Retriever,
    pub order: RagOrder,
    pub chunk_len: usize,
    pub available_budget: usize,
    pub kappa: usize,
    /// Score of every chunk, by chunk id.
    pub scores: Vec<S>,
    /// Retained ids, best first.
    pub ranked_ids: Vec<usize>,
    /// Retained ids in prompt order.
    pub presented_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RunTrace<S: Scalar> {
    pub method: Method,
    pub query: String,
    pub config: AgentRunConfig,
    pub seed: u64,
    pub embedder: Option<String>,
    pub backend: String,
    pub tokenizer: String,
    pub chunks: Vec<Chunk>,
    pub partition: Option<Partition>,
    pub forest: Option<LinearForest<S>>,
    pub rag: Option<RagSelection<S>>,
    /// Text handed to the single reader call (truncation and retrieval baselines).
    pub context: Option<String>,
    pub calls: Vec<CallRecord>,
    pub final_summaries: Vec<String>,
    pub raw_answer: String,
    pub answer: String,
    pub error: Option<String>,
    /// Not persisted, so stored traces are reproducible byte for byte.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl<S: Scalar> RunTrace<S> {
    pub fn new(
        method: Method,
        query: &str,
        config: &AgentRunConfig,
        backend: String,
        tokenizer: String,
    ) -> Self {
        Self {
            method,
            query: query.to_string(),
            config: config.clone(),
            seed: config.seed,
            embedder: None,
            backend,
            tokenizer,
            chunks: Vec::new(),
            partition: None,
            forest: None,
            rag: None,
            context: None,
            calls: Vec::new(),
            final_summaries: Vec::new(),
            raw_answer: String::new(),
            answer: String::new(),
            error: None,
            wall_time: Duration::ZERO,
        }
    }

    pub fn prompt_hashes(&self) -> Vec<&str> {
        self.calls.iter().map(|c| c.prompt_hash.as_str()).collect()
    }

    /// The compressed input the answering call saw: joined final summaries
    /// for agent methods, the (truncated or retrieved) context otherwise.
    pub fn compressed_text(&self) -> String {
        match self.method {
            Method::Vanilla | Method::Rag => self.context.clone().unwrap_or_default(),
            _ => self.final_summaries.join("\n\n"),
        }
    }

    pub fn to_events(&self) -> Vec<TraceEvent<S>> {
        let mut events = vec![TraceEvent::Start {
            method: self.method,
            query: self.query.clone(),
            config: self.config.clone(),
            seed: self.seed,
            embedder: self.embedder.clone(),
            backend: self.backend.clone(),
            tokenizer: self.tokenizer.clone(),
        }];
        events.extend(self.chunks.iter().cloned().map(TraceEvent::Chunk));
        if let Some(partition) = &self.partition {
            events.push(TraceEvent::Partition {
                partition: partition.clone(),
            });
        }
        if let Some(selection) = &self.rag {
            events.push(TraceEvent::Rag {
                selection: selection.clone(),
            });
        }
        if let Some(text) = &self.context {
            events.push(TraceEvent::Context { text: text.clone() });
        }
        events.extend(self.calls.iter().cloned().map(TraceEvent::Call));
        if let Some(forest) = &self.forest {
            events.push(TraceEvent::Forest {
                forest: forest.clone(),
            });
        }
        events.push(TraceEvent::Finish {
            final_summaries: self.final_summaries.clone(),
            raw_answer: self.raw_answer.clone(),
            answer: self.answer.clone(),
            error: self.error.clone(),
        });
        events
    }

    /// One JSON object per line, newline-terminated.
    pub fn to_jsonl(&self) -> String {
        self.to_events()
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n")
            .collect()
    }

    pub fn from_events(
        events: impl IntoIterator<Item = TraceEvent<S>>,
    ) -> Result<Self, TraceError> {
        let mut events = events.into_iter();
        let mut trace = match events.next() {
            Some(TraceEvent::Start {
                method,
                query,
                config,
                seed,
                embedder,
                backend,
                tokenizer,
            }) => {
                let mut t = RunTrace::new(method, &query, &config, backend, tokenizer);
                t.seed = seed;
                t.embedder = embedder;
                t
            }
            _ => return Err(TraceError::Structure("first event must be `start`".into())),
        };
        let mut finished = false;
        for event in events {
            if finished {
                return Err(TraceError::Structure("events after `finish`".into()));
            }
            match event {
                TraceEvent::Start { .. } => {
                    return Err(TraceError::Structure("duplicate `start`".into()))
                }
                TraceEvent::Chunk(c) => trace.chunks.push(c),
                TraceEvent::Partition { partition } => trace.partition = Some(partition),
                TraceEvent::Rag { selection } => trace.rag = Some(selection),
                TraceEvent::Context { text } => trace.context = Some(text),
                TraceEvent::Call(c) => trace.calls.push(c),
                TraceEvent::Forest { forest } => trace.forest = Some(forest),
                TraceEvent::Finish {
                    final_summaries,
                    raw_answer,
                    answer,
                    error,
                } => {
                    trace.final_summaries = final_summaries;
                    trace.raw_answer = raw_answer;
                    trace.answer = answer;
                    trace.error = error;
                    finished = true;
                }
            }
        }
        if !finished {
            return Err(TraceError::Structure("missing `finish`".into()));
        }
        Ok(trace)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let events = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| TraceError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<TraceEvent<S>>, _>>()?;
        Self::from_events(events)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("malformed trace: {0}")]
    Structure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent<S: Scalar> {
    Start {
        method: Method,
        query: String,
        config: AgentRunConfig,
        seed: u64,
        embedder: Option<String>,
        backend: String,
        tokenizer: String,
    },
    Chunk(Chunk),
    Partition {
        partition: Partition,
    },
    Rag {
        selection: RagSelection<S>,
    },
    Context {
        text: String,
    },
    Call(CallRecord),
    Forest {
        forest: LinearForest<S>,
    },
    Finish {
        final_summaries: Vec<String>,
        raw_answer: String,
        answer: String,
        error: Option<String>,
    },
}
