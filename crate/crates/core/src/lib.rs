//! Query-focused long-document QA with chains and forests of worker agents.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the CLI uses.

pub mod agent;
pub mod cluster;
pub mod embedding;
pub mod eval;
pub mod forest;
pub mod http;
pub mod parallel;
pub mod pipeline;
pub mod retrieval;
pub mod scalar;
pub mod synth;
pub mod text;

pub use agent::{AgentRunConfig, ChatBackend, MockBackend, PromptSet, TaskKind};
pub use cluster::{ClusterMethod, Partition};
pub use embedding::{Embedder, EmbeddingVector, HashEmbedder};
pub use pipeline::{Engine, Method, RunTrace};
pub use scalar::Scalar;
pub use text::{Chunk, Tokenizer, WhitespaceTokenizer};

pub type Embedding = EmbeddingVector<f64>;
pub type Embedding32 = EmbeddingVector<f32>;
pub type Trace = RunTrace<f64>;
pub type Trace32 = RunTrace<f32>;
pub type Forest = forest::LinearForest<f64>;
pub type Path = forest::PathState<f64>;
pub type Stats = eval::BoxStats<f64>;
