//! Worker and manager agents on top of a chat backend.

mod mock;
mod prompt;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterMethod;
use crate::forest::SelectionPolicy;
use crate::http::ProviderError;
use crate::retrieval::{RagOrder, Retriever};
use crate::text::{truncate_head, Tokenizer};

pub use mock::{sentences, MockBackend};
pub use prompt::{PromptError, PromptSet, PromptTemplate, TemplateName, PLACEHOLDERS};
pub use remote::{RemoteChatBackend, RemoteChatConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("mock backend cannot parse prompt: {0}")]
    UnparseablePrompt(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("prompt has {tokens} tokens, exceeding the context window of {t_max}")]
    PromptOverflow { tokens: usize, t_max: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
}

/// Decoding request for one completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub max_output_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub seed: Option<u64>,
}

/// A text-completion service. Shared across concurrently running paths.
pub trait ChatBackend: Send + Sync {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError>;

    fn identity(&self) -> String;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        (**self).generate(request)
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    SingleDocQa,
    MultiDocQa,
}

impl TaskKind {
    pub fn manager_template(self) -> TemplateName {
        match self {
            TaskKind::SingleDocQa => TemplateName::ManagerSingle,
            TaskKind::MultiDocQa => TemplateName::ManagerMulti,
        }
    }

    pub fn vanilla_template(self) -> TemplateName {
        match self {
            TaskKind::SingleDocQa => TemplateName::VanillaSingle,
            TaskKind::MultiDocQa => TemplateName::VanillaMulti,
        }
    }
}

pub const DEFAULT_MANAGER_MAX_TOKENS: usize = 128;
pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_TOP_P: f64 = 0.9;
pub const DEFAULT_K: usize = 4;
pub const DEFAULT_RAG_CHUNK_WORDS: usize = 300;
pub const DEFAULT_MAX_PARALLEL: usize = 4;

/// Worker output budget for a context window: 256 at 2K, 1024 at 8K, and
/// `t_max / 8` in general.
pub fn default_worker_budget(t_max: usize) -> usize {
    (t_max / 8).max(1)
}

/// Everything that shapes one method execution apart from the injected
/// embedder and backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRunConfig {
    pub t_max: usize,
    pub worker_max_tokens: usize,
    pub manager_max_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub k: usize,
    pub task_kind: TaskKind,
    pub clustering: ClusterMethod,
    pub selection: SelectionPolicy,
    pub retriever: Retriever,
    pub rag_chunk_words: usize,
    pub rag_order: RagOrder,
    pub max_parallel: usize,
    pub seed: u64,
}

impl AgentRunConfig {
    pub fn for_context_window(t_max: usize) -> Self {
        Self {
            t_max,
            worker_max_tokens: default_worker_budget(t_max),
            manager_max_tokens: DEFAULT_MANAGER_MAX_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            k: DEFAULT_K,
            task_kind: TaskKind::default(),
            clustering: ClusterMethod::default(),
            selection: SelectionPolicy::default(),
            retriever: Retriever::default(),
            rag_chunk_words: DEFAULT_RAG_CHUNK_WORDS,
            rag_order: RagOrder::default(),
            max_parallel: DEFAULT_MAX_PARALLEL,
            seed: 0,
        }
    }

    pub fn request(&self, prompt: String, max_output_tokens: usize) -> GenerateRequest {
        GenerateRequest {
            prompt,
            max_output_tokens,
            temperature: self.temperature,
            top_p: self.top_p,
            seed: Some(self.seed),
        }
    }
}

impl Default for AgentRunConfig {
    fn default() -> Self {
        Self::for_context_window(2048)
    }
}

/// One backend invocation as seen by the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentCall {
    pub prompt: String,
    pub prompt_tokens: usize,
    /// Backend output, cut to `max_output_tokens` if the backend overran.
    pub output: String,
    pub output_tokens: usize,
    pub max_output_tokens: usize,
}

fn invoke(
    prompt: String,
    max_output_tokens: usize,
    backend: &dyn ChatBackend,
    cfg: &AgentRunConfig,
    tokenizer: &dyn Tokenizer,
) -> Result<AgentCall, AgentError> {
    let prompt_tokens = tokenizer.count(&prompt);
    if prompt_tokens > cfg.t_max {
        return Err(AgentError::PromptOverflow {
            tokens: prompt_tokens,
            t_max: cfg.t_max,
        });
    }
    let raw = backend.generate(&cfg.request(prompt.clone(), max_output_tokens))?;
    let output = truncate_head(&raw, max_output_tokens, tokenizer);
    let output_tokens = tokenizer.count(&output);
    Ok(AgentCall {
        prompt,
        prompt_tokens,
        output,
        output_tokens,
        max_output_tokens,
    })
}

pub fn render_worker_prompt(
    prompts: &PromptSet,
    chunk_text: &str,
    prev_summary: &str,
    query: &str,
) -> Result<String, PromptError> {
    prompts.get(TemplateName::Worker).render(&[
        ("input_chunk", chunk_text),
        ("prev_cu", prev_summary),
        ("query", query),
    ])
}

/// Compresses one chunk together with the previous summary.
#[allow(clippy::too_many_arguments)]
pub fn worker_step(
    chunk_text: &str,
    prev_summary: &str,
    query: &str,
    max_output_tokens: usize,
    backend: &dyn ChatBackend,
    cfg: &AgentRunConfig,
    prompts: &PromptSet,
    tokenizer: &dyn Tokenizer,
) -> Result<AgentCall, AgentError> {
    let prompt = render_worker_prompt(prompts, chunk_text, prev_summary, query)?;
    invoke(prompt, max_output_tokens, backend, cfg, tokenizer)
}

/// Header preceding summary `index` (0-based) of `total`.
pub fn worker_header(index: usize, total: usize) -> String {
    format!("[Summary of Worker {} out of {total}]", index + 1)
}

/// Manager input: a lone summary is passed as is, several are each placed
/// under their worker header and separated by a blank line.
pub fn format_summaries(summaries: &[String]) -> String {
    if summaries.len() == 1 {
        return summaries[0].clone();
    }
    summaries
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}\n{s}", worker_header(i, summaries.len())))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_manager_prompt(
    prompts: &PromptSet,
    task_kind: TaskKind,
    summaries: &[String],
    query: &str,
) -> Result<String, PromptError> {
    prompts
        .get(task_kind.manager_template())
        .render(&[("summary", &format_summaries(summaries)), ("query", query)])
}

pub fn render_vanilla_prompt(
    prompts: &PromptSet,
    task_kind: TaskKind,
    context: &str,
    query: &str,
) -> Result<String, PromptError> {
    prompts
        .get(task_kind.vanilla_template())
        .render(&[("context", context), ("input", query)])
}

/// Final answer from worker summaries; returns the call and the extracted answer.
pub fn manager_answer(
    summaries: &[String],
    query: &str,
    backend: &dyn ChatBackend,
    cfg: &AgentRunConfig,
    prompts: &PromptSet,
    tokenizer: &dyn Tokenizer,
) -> Result<(AgentCall, String), AgentError> {
    let prompt = render_manager_prompt(prompts, cfg.task_kind, summaries, query)?;
    let call = invoke(prompt, cfg.manager_max_tokens, backend, cfg, tokenizer)?;
    let answer = extract_answer(&call.output);
    Ok((call, answer))
}

/// Direct answer from (possibly truncated) context.
pub fn vanilla_answer(
    context: &str,
    query: &str,
    backend: &dyn ChatBackend,
    cfg: &AgentRunConfig,
    prompts: &PromptSet,
    tokenizer: &dyn Tokenizer,
) -> Result<(AgentCall, String), AgentError> {
    let prompt = render_vanilla_prompt(prompts, cfg.task_kind, context, query)?;
    let call = invoke(prompt, cfg.manager_max_tokens, backend, cfg, tokenizer)?;
    let answer = extract_answer(&call.output);
    Ok((call, answer))
}

/// Content of the first `<answer>...</answer>` pair, trimmed; the whole text
/// trimmed when there is no such pair.
pub fn extract_answer(raw: &str) -> String {
    const OPEN: &str = "<answer>";
    const CLOSE: &str = "</answer>";
    if let Some(start) = raw.find(OPEN) {
        let body = &raw[start + OPEN.len()..];
        if let Some(end) = body.find(CLOSE) {
            return body[..end].trim().to_string();
        }
    }
    raw.trim().to_string()
}
