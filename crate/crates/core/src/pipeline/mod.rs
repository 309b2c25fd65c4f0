//! End-to-end methods: the agent forest and its baselines.
//!
//! | method            | compression                                               |
//! |-------------------|-----------------------------------------------------------|
//! | `goa`             | cluster chunks, greedy-ordered summarizing path per cluster |
//! | `coa`             | one summarizing chain in document order                   |
//! | `parallel_agents` | every chunk summarized alone                              |
//! | `rag`             | top-κ chunks by retriever score                           |
//! | `vanilla`         | middle truncation                                         |
//!
//! Worker prompts carry the chunk, the previous summary and the query, so the
//! chunk budget is `t_max - worker_overhead - 2 * worker_max_tokens` (one
//! worker budget for the incoming summary, one reserved for the output).

mod audit;
mod trace;

use std::time::Instant;

use thiserror::Error;

use crate::agent::{
    manager_answer, render_manager_prompt, render_vanilla_prompt, render_worker_prompt,
    vanilla_answer, worker_step, AgentCall, AgentError, AgentRunConfig, ChatBackend, PromptError,
    PromptSet,
};
use crate::cluster::{cluster, ClusterError};
use crate::embedding::{cosine_sim, Embedder, EmbeddingError};
use crate::forest::{init_forest, select_with_policy, ForestError, PathState};
use crate::parallel::parallel_map;
use crate::retrieval::{bm25_scores, kappa, top_k, Bm25Params, RagOrder, Retriever};
use crate::scalar::Scalar;
use crate::text::{segment, truncate_middle, Chunk, TextError, Tokenizer, WhitespaceTokenizer};

pub use audit::{audit_trace, AuditViolation};
pub use trace::{
    prompt_hash, AgentRole, CallRecord, Method, RagSelection, RunTrace, TraceError, TraceEvent,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("token budget exhausted: {0}")]
    Budget(String),
}

impl From<PromptError> for PipelineError {
    fn from(e: PromptError) -> Self {
        PipelineError::Agent(AgentError::Prompt(e))
    }
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{method} run failed: {error}")]
pub struct RunFailure<S: Scalar> {
    pub method: Method,
    pub error: PipelineError,
    pub partial: Box<RunTrace<S>>,
}

pub type RunResult<S> = Result<RunTrace<S>, RunFailure<S>>;

fn record(
    role: AgentRole,
    path: Option<usize>,
    step: usize,
    chunk_id: Option<usize>,
    call: AgentCall,
) -> CallRecord {
    CallRecord {
        role,
        path,
        step,
        chunk_id,
        prompt_hash: prompt_hash(&call.prompt),
        prompt_tokens: call.prompt_tokens,
        max_output_tokens: call.max_output_tokens,
        output_tokens: call.output_tokens,
        prompt: call.prompt,
        response: call.output,
    }
}

/// Injected services plus configuration for running any method.
pub struct Engine<'a, S: Scalar> {
    pub cfg: &'a AgentRunConfig,
    pub embedder: &'a dyn Embedder<S>,
    pub backend: &'a dyn ChatBackend,
    pub tokenizer: &'a dyn Tokenizer,
    pub prompts: &'a PromptSet,
}

struct PathOutcome<S: Scalar> {
    state: PathState<S>,
    calls: Vec<CallRecord>,
    error: Option<PipelineError>,
}

impl<'a, S: Scalar> Engine<'a, S> {
    pub fn new(
        cfg: &'a AgentRunConfig,
        embedder: &'a dyn Embedder<S>,
        backend: &'a dyn ChatBackend,
        tokenizer: &'a dyn Tokenizer,
        prompts: &'a PromptSet,
    ) -> Self {
        Self {
            cfg,
            embedder,
            backend,
            tokenizer,
            prompts,
        }
    }

    pub fn run(&self, method: Method, document: &str, query: &str) -> RunResult<S> {
        let started = Instant::now();
        let mut trace = RunTrace::new(
            method,
            query,
            self.cfg,
            self.backend.identity(),
            self.tokenizer.identity(),
        );
        if matches!(method, Method::Goa | Method::Rag) {
            trace.embedder = Some(self.embedder.identity());
        }
        let outcome = if query.trim().is_empty() {
            Err(PipelineError::EmptyQuery)
        } else {
            match method {
                Method::Goa => self.goa(document, query, &mut trace),
                Method::Coa => self.coa(document, query, &mut trace),
                Method::ParallelAgents => self.parallel_agents(document, query, &mut trace),
                Method::Rag => self.rag(document, query, &mut trace),
                Method::Vanilla => self.vanilla(document, query, &mut trace),
            }
        };
        trace.wall_time = started.elapsed();
        match outcome {
            Ok(()) => Ok(trace),
            Err(error) => {
                trace.error = Some(error.to_string());
                Err(RunFailure {
                    method,
                    error,
                    partial: Box::new(trace),
                })
            }
        }
    }

    fn worker_overhead(&self, query: &str) -> Result<usize, PipelineError> {
        Ok(self
            .tokenizer
            .count(&render_worker_prompt(self.prompts, "", "", query)?))
    }

    /// Tokens left for chunk text in a worker prompt.
    pub fn chunk_budget(&self, query: &str) -> Result<usize, PipelineError> {
        let overhead = self.worker_overhead(query)?;
        let reserved = overhead + 2 * self.cfg.worker_max_tokens;
        match self.cfg.t_max.checked_sub(reserved) {
            Some(b) if b > 0 => Ok(b),
            _ => Err(PipelineError::Budget(format!(
                "worker prompt overhead {overhead} plus 2 x {} summary tokens leaves no room for a chunk within {}",
                self.cfg.worker_max_tokens, self.cfg.t_max
            ))),
        }
    }

    /// Manager prompt tokens with `n` empty summaries (headers included).
    fn manager_overhead(&self, query: &str, n: usize) -> Result<usize, PipelineError> {
        let empty = vec![String::new(); n.max(1)];
        Ok(self.tokenizer.count(&render_manager_prompt(
            self.prompts,
            self.cfg.task_kind,
            &empty,
            query,
        )?))
    }

    fn chunks(
        &self,
        document: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<Vec<Chunk>, PipelineError> {
        let chunks = segment(document, self.chunk_budget(query)?, self.tokenizer)?;
        trace.chunks = chunks.clone();
        Ok(chunks)
    }

    /// Runs one path to completion, stopping at the first failure.
    fn run_path(
        &self,
        mut state: PathState<S>,
        chunks: &[Chunk],
        query: &str,
        query_vec: Option<&crate::embedding::EmbeddingVector<S>>,
        path_label: usize,
    ) -> PathOutcome<S> {
        let mut calls = Vec::new();
        while !state.is_complete() {
            let step = state.order.len();
            let remaining: Vec<&Chunk> = state
                .remaining()
                .into_iter()
                .map(|id| &chunks[id])
                .collect();
            let prev = state.last_summary().to_string();
            let (chunk_id, score) = match query_vec {
                Some(q) => match select_with_policy(
                    self.cfg.selection,
                    q,
                    &prev,
                    &remaining,
                    self.embedder,
                ) {
                    Ok(pick) => pick,
                    Err(e) => {
                        return PathOutcome {
                            state,
                            calls,
                            error: Some(e.into()),
                        }
                    }
                },
                None => (remaining[0].id, S::nan()),
            };
            let call = match worker_step(
                &chunks[chunk_id].text,
                &prev,
                query,
                self.cfg.worker_max_tokens,
                self.backend,
                self.cfg,
                self.prompts,
                self.tokenizer,
            ) {
                Ok(call) => call,
                Err(e) => {
                    return PathOutcome {
                        state,
                        calls,
                        error: Some(e.into()),
                    }
                }
            };
            let summary = call.output.clone();
            calls.push(record(
                AgentRole::Worker,
                Some(path_label),
                step,
                Some(chunk_id),
                call,
            ));
            state = match state.advance(chunk_id, summary, score) {
                Ok(next) => next,
                Err(e) => {
                    return PathOutcome {
                        state,
                        calls,
                        error: Some(e.into()),
                    }
                }
            };
        }
        PathOutcome {
            state,
            calls,
            error: None,
        }
    }

    fn finish_with_manager(
        &self,
        summaries: Vec<String>,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        trace.final_summaries = summaries;
        let (call, answer) = manager_answer(
            &trace.final_summaries,
            query,
            self.backend,
            self.cfg,
            self.prompts,
            self.tokenizer,
        )?;
        trace.raw_answer = call.output.clone();
        trace.answer = answer;
        trace
            .calls
            .push(record(AgentRole::Manager, None, 0, None, call));
        Ok(())
    }

    fn goa(
        &self,
        document: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        let chunks = self.chunks(document, query, trace)?;
        let k = self.cfg.k.min(chunks.len()).max(1);
        let manager_tokens = self.manager_overhead(query, k)? + k * self.cfg.worker_max_tokens;
        if manager_tokens > self.cfg.t_max {
            return Err(PipelineError::Budget(format!(
                "{k} summaries of {} tokens plus manager overhead need {manager_tokens} > {}",
                self.cfg.worker_max_tokens, self.cfg.t_max
            )));
        }

        let mut texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        texts.push(query.to_string());
        let mut vectors = self.embedder.embed_batch(&texts)?;
        if vectors.len() != texts.len() {
            return Err(EmbeddingError::CountMismatch {
                expected: texts.len(),
                got: vectors.len(),
            }
            .into());
        }
        let query_vec = vectors.pop().expect("query vector");

        let partition = cluster(&vectors, k, self.cfg.clustering, self.cfg.seed)?;
        trace.partition = Some(partition.clone());
        let mut forest = init_forest::<S>(&partition, &chunks)?;

        let limit = self.cfg.max_parallel.min(forest.paths.len());
        let outcomes = parallel_map(&forest.paths, limit, |i, path| {
            self.run_path(path.clone(), &chunks, query, Some(&query_vec), i)
        });

        let mut first_error = None;
        for (slot, outcome) in forest.paths.iter_mut().zip(outcomes) {
            *slot = outcome.state;
            trace.calls.extend(outcome.calls);
            if first_error.is_none() {
                first_error = outcome.error;
            }
        }
        trace.forest = Some(forest.clone());
        if let Some(e) = first_error {
            return Err(e);
        }
        self.finish_with_manager(forest.final_summaries(), query, trace)
    }

    fn coa(
        &self,
        document: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        let chunks = self.chunks(document, query, trace)?;
        let chain = PathState::new(0, chunks.iter().map(|c| c.id).collect());
        let outcome = self.run_path(chain, &chunks, query, None, 0);
        trace.calls.extend(outcome.calls);
        if let Some(e) = outcome.error {
            return Err(e);
        }
        self.finish_with_manager(vec![outcome.state.last_summary().to_string()], query, trace)
    }

    /// Per-worker budget when `n` independent summaries must share the manager prompt.
    pub fn parallel_worker_budget(&self, query: &str, n: usize) -> Result<usize, PipelineError> {
        let overhead = self.manager_overhead(query, n)?;
        let share = self.cfg.t_max.saturating_sub(overhead) / n.max(1);
        match share.min(self.cfg.worker_max_tokens) {
            0 => Err(PipelineError::Budget(format!(
                "{n} worker summaries cannot share the manager prompt (overhead {overhead}, t_max {})",
                self.cfg.t_max
            ))),
            b => Ok(b),
        }
    }

    fn parallel_agents(
        &self,
        document: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        let chunks = self.chunks(document, query, trace)?;
        let budget = self.parallel_worker_budget(query, chunks.len())?;
        let results = parallel_map(&chunks, self.cfg.max_parallel, |_, chunk| {
            worker_step(
                &chunk.text,
                "",
                query,
                budget,
                self.backend,
                self.cfg,
                self.prompts,
                self.tokenizer,
            )
        });
        let mut summaries = Vec::with_capacity(chunks.len());
        let mut first_error = None;
        for (chunk, result) in chunks.iter().zip(results) {
            match result {
                Ok(call) => {
                    summaries.push(call.output.clone());
                    trace.calls.push(record(
                        AgentRole::Worker,
                        Some(chunk.id),
                        0,
                        Some(chunk.id),
                        call,
                    ));
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e.into());
        }
        self.finish_with_manager(summaries, query, trace)
    }

    fn rag(
        &self,
        document: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        let chunk_len = self.cfg.rag_chunk_words.max(1);
        let chunks = segment(document, chunk_len, self.tokenizer)?;
        trace.chunks = chunks.clone();

        let overhead = self.tokenizer.count(&render_vanilla_prompt(
            self.prompts,
            self.cfg.task_kind,
            "",
            query,
        )?);
        let available = self.cfg.t_max.saturating_sub(overhead);
        let kappa = kappa(available, chunk_len);

        let scores: Vec<S> = match self.cfg.retriever {
            Retriever::Embedding => {
                let mut texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
                texts.push(query.to_string());
                let mut vectors = self.embedder.embed_batch(&texts)?;
                if vectors.len() != texts.len() {
                    return Err(EmbeddingError::CountMismatch {
                        expected: texts.len(),
                        got: vectors.len(),
                    }
                    .into());
                }
                let q = vectors.pop().expect("query vector");
                vectors
                    .iter()
                    .map(|v| cosine_sim(&q, v))
                    .collect::<Result<_, _>>()?
            }
            Retriever::Bm25 => {
                let docs: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
                bm25_scores(&docs, query, Bm25Params::default())
            }
        };
        let ranked_ids = top_k(&scores, kappa.min(chunks.len()));
        let mut presented_ids = ranked_ids.clone();
        if self.cfg.rag_order == RagOrder::Document {
            presented_ids.sort_unstable();
        }
        let context = presented_ids
            .iter()
            .map(|&i| chunks[i].text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        trace.rag = Some(RagSelection {
            retriever: self.cfg.retriever,
            order: self.cfg.rag_order,
            chunk_len,
            available_budget: available,
            kappa,
            scores,
            ranked_ids,
            presented_ids,
        });
        trace.context = Some(context.clone());
        self.read(&context, query, trace)
    }

    fn vanilla(
        &self,
        document: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        if document.trim().is_empty() {
            return Err(TextError::EmptyDocument.into());
        }
        let overhead = self.tokenizer.count(&render_vanilla_prompt(
            self.prompts,
            self.cfg.task_kind,
            "",
            query,
        )?);
        let budget = self
            .cfg
            .t_max
            .checked_sub(overhead + self.cfg.manager_max_tokens)
            .filter(|&b| b > 0)
            .ok_or_else(|| {
                PipelineError::Budget(format!(
                    "prompt overhead {overhead} leaves no room for context"
                ))
            })?;
        let context = truncate_middle(document, budget, self.tokenizer);
        trace.context = Some(context.clone());
        self.read(&context, query, trace)
    }

    fn read(
        &self,
        context: &str,
        query: &str,
        trace: &mut RunTrace<S>,
    ) -> Result<(), PipelineError> {
        let (call, answer) = vanilla_answer(
            context,
            query,
            self.backend,
            self.cfg,
            self.prompts,
            self.tokenizer,
        )?;
        trace.raw_answer = call.output.clone();
        trace.answer = answer;
        trace
            .calls
            .push(record(AgentRole::Reader, None, 0, None, call));
        Ok(())
    }
}

fn with_defaults<S: Scalar, R>(
    cfg: &AgentRunConfig,
    embedder: &dyn Embedder<S>,
    backend: &dyn ChatBackend,
    f: impl FnOnce(&Engine<'_, S>) -> R,
) -> R {
    let prompts = PromptSet::builtin();
    let tokenizer = WhitespaceTokenizer;
    f(&Engine::new(cfg, embedder, backend, &tokenizer, &prompts))
}

/// Placeholder embedder for methods that never embed.
struct NoEmbedder;

impl<S: Scalar> Embedder<S> for NoEmbedder {
    fn embed_batch(
        &self,
        _: &[String],
    ) -> Result<Vec<crate::embedding::EmbeddingVector<S>>, EmbeddingError> {
        Err(EmbeddingError::Empty)
    }
    fn dim(&self) -> usize {
        0
    }
    fn identity(&self) -> String {
        "none".into()
    }
}

pub fn run_goa<S: Scalar>(
    document: &str,
    query: &str,
    cfg: &AgentRunConfig,
    embedder: &dyn Embedder<S>,
    backend: &dyn ChatBackend,
) -> RunResult<S> {
    with_defaults(cfg, embedder, backend, |e| {
        e.run(Method::Goa, document, query)
    })
}

pub fn run_coa<S: Scalar>(
    document: &str,
    query: &str,
    cfg: &AgentRunConfig,
    backend: &dyn ChatBackend,
) -> RunResult<S> {
    with_defaults(cfg, &NoEmbedder, backend, |e| {
        e.run(Method::Coa, document, query)
    })
}

pub fn run_rag<S: Scalar>(
    document: &str,
    query: &str,
    cfg: &AgentRunConfig,
    embedder: &dyn Embedder<S>,
    backend: &dyn ChatBackend,
) -> RunResult<S> {
    with_defaults(cfg, embedder, backend, |e| {
        e.run(Method::Rag, document, query)
    })
}

pub fn run_vanilla<S: Scalar>(
    document: &str,
    query: &str,
    cfg: &AgentRunConfig,
    backend: &dyn ChatBackend,
) -> RunResult<S> {
    with_defaults(cfg, &NoEmbedder, backend, |e| {
        e.run(Method::Vanilla, document, query)
    })
}

pub fn run_parallel_agents<S: Scalar>(
    document: &str,
    query: &str,
    cfg: &AgentRunConfig,
    backend: &dyn ChatBackend,
) -> RunResult<S> {
    with_defaults(cfg, &NoEmbedder, backend, |e| {
        e.run(Method::ParallelAgents, document, query)
    })
}
