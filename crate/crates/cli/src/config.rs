//! File-backed run configuration with dotted-path overrides.

use std::path::{Path, PathBuf};

use agent_forest::agent::{
    default_worker_budget, AgentRunConfig, TaskKind, DEFAULT_K, DEFAULT_MANAGER_MAX_TOKENS,
    DEFAULT_MAX_PARALLEL, DEFAULT_RAG_CHUNK_WORDS, DEFAULT_TEMPERATURE, DEFAULT_TOP_P,
};
use agent_forest::cluster::ClusterMethod;
use agent_forest::forest::SelectionPolicy;
use agent_forest::pipeline::Method;
use agent_forest::retrieval::{RagOrder, Retriever};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderProvider {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    #[serde(default)]
    pub provider: EmbedderProvider,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Hash embedder seed; ignored by remote providers.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_embed_key_env")]
    pub api_key_env: String,
}

impl Default for EmbedderSection {
    fn default() -> Self {
        Self {
            provider: EmbedderProvider::Hash,
            model: String::new(),
            endpoint: String::new(),
            dim: default_dim(),
            seed: 0,
            api_key_env: default_embed_key_env(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendProvider {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    #[serde(default)]
    pub provider: BackendProvider,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_llm_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            provider: BackendProvider::Mock,
            model: String::new(),
            endpoint: String::new(),
            api_key_env: default_llm_key_env(),
            timeout_secs: default_timeout(),
        }
    }
}

fn default_dim() -> usize {
    256
}
fn default_embed_key_env() -> String {
    "EMBED_API_KEY".into()
}
fn default_llm_key_env() -> String {
    "LLM_API_KEY".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_t_max() -> usize {
    2048
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_manager_max() -> usize {
    DEFAULT_MANAGER_MAX_TOKENS
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_top_p() -> f64 {
    DEFAULT_TOP_P
}
fn default_rag_chunk_words() -> usize {
    DEFAULT_RAG_CHUNK_WORDS
}
fn default_max_parallel() -> usize {
    DEFAULT_MAX_PARALLEL
}

/// Everything a run needs apart from credentials, which come from the
/// environment. Relative `dataset` / `output_dir` paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Defaults to `t_max / 8`.
    #[serde(default)]
    pub worker_max_tokens: Option<usize>,
    #[serde(default = "default_manager_max")]
    pub manager_max_tokens: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default)]
    pub task_kind: TaskKind,
    #[serde(default)]
    pub clustering: ClusterMethod,
    #[serde(default)]
    pub selection: SelectionPolicy,
    #[serde(default)]
    pub retriever: Retriever,
    #[serde(default = "default_rag_chunk_words")]
    pub rag_chunk_words: usize,
    #[serde(default)]
    pub rag_order: RagOrder,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// Skip malformed dataset lines instead of aborting.
    #[serde(default)]
    pub lenient: bool,
    #[serde(default)]
    pub embedder: EmbedderSection,
    #[serde(default)]
    pub backend: BackendSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.t_max == 0 {
            return bad("t_max must be positive".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        let mut unique = self.seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.worker_max_tokens == Some(0) || self.manager_max_tokens == 0 {
            return bad("output budgets must be positive".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} outside (0, 1]", self.top_p));
        }
        if self.rag_chunk_words == 0 || self.max_parallel == 0 {
            return bad("rag_chunk_words and max_parallel must be positive".into());
        }
        if self.embedder.dim < 8 {
            return bad("embedder.dim must be at least 8".into());
        }
        if self.embedder.provider == EmbedderProvider::Remote
            && (self.embedder.endpoint.is_empty() || self.embedder.model.is_empty())
        {
            return bad("remote embedder needs embedder.endpoint and embedder.model".into());
        }
        if self.backend.provider == BackendProvider::Remote
            && (self.backend.endpoint.is_empty() || self.backend.model.is_empty())
        {
            return bad("remote backend needs backend.endpoint and backend.model".into());
        }
        Ok(())
    }

    pub fn agent_config(&self, seed: u64) -> AgentRunConfig {
        AgentRunConfig {
            t_max: self.t_max,
            worker_max_tokens: self
                .worker_max_tokens
                .unwrap_or_else(|| default_worker_budget(self.t_max)),
            manager_max_tokens: self.manager_max_tokens,
            temperature: self.temperature,
            top_p: self.top_p,
            k: self.k,
            task_kind: self.task_kind,
            clustering: self.clustering,
            selection: self.selection,
            retriever: self.retriever,
            rag_chunk_words: self.rag_chunk_words,
            rag_order: self.rag_order,
            max_parallel: self.max_parallel,
            seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable as TOML")
    }

    /// Parses TOML text, applies `key.path=value` overrides and validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it are made relative to
    /// the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }
}

/// Values parse as TOML when they can (`3`, `true`, `[0, 1]`, `"x"`) and fall
/// back to a bare string otherwise.
fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!(
            "override `{spec}` has an empty key"
        )));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut node = table;
    for key in parents {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("override `{spec}`: `{key}` is not a section"))
        })?;
    }
    node.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}
