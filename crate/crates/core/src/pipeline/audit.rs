//! Post-hoc structural checks on a recorded run.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::trace::{prompt_hash, AgentRole, Method, RunTrace};
use crate::agent::{render_worker_prompt, PromptSet};
use crate::embedding::Embedder;
use crate::forest::{score_candidates, SelectionPolicy};
use crate::scalar::Scalar;
use crate::text::{Chunk, Tokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub check: String,
    pub detail: String,
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.check, self.detail)
    }
}

fn violation(check: &str, detail: String) -> AuditViolation {
    AuditViolation {
        check: check.to_string(),
        detail,
    }
}

/// Re-derives every checkable invariant of `trace` and reports each breach:
///
/// * `budget`: every prompt fits the context window and every output its budget;
/// * `hash`: recorded prompt hashes match the prompts;
/// * `partition`, `forest`: valid, complete and consistent with the chunks;
/// * `greedy`: each greedy step picked the argmax under exhaustive re-scoring;
/// * `chain`: each worker prompt carries its chunk and predecessor's summary.
pub fn audit_trace<S: Scalar>(
    trace: &RunTrace<S>,
    embedder: &dyn Embedder<S>,
    tokenizer: &dyn Tokenizer,
    prompts: &PromptSet,
) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let cfg = &trace.config;

    for (i, call) in trace.calls.iter().enumerate() {
        let tokens = tokenizer.count(&call.prompt);
        if tokens > cfg.t_max {
            out.push(violation(
                "budget",
                format!("call {i}: prompt has {tokens} tokens > t_max {}", cfg.t_max),
            ));
        }
        let limit = match call.role {
            AgentRole::Worker => cfg.worker_max_tokens,
            AgentRole::Manager | AgentRole::Reader => cfg.manager_max_tokens,
        };
        let produced = tokenizer.count(&call.response);
        if produced > call.max_output_tokens || call.max_output_tokens > limit {
            out.push(violation(
                "budget",
                format!(
                    "call {i}: output {produced} tokens, call budget {}, role limit {limit}",
                    call.max_output_tokens
                ),
            ));
        }
        if prompt_hash(&call.prompt) != call.prompt_hash {
            out.push(violation(
                "hash",
                format!("call {i}: recorded prompt hash does not match prompt"),
            ));
        }
    }

    if trace.error.is_some() {
        return out;
    }

    for (pos, chunk) in trace.chunks.iter().enumerate() {
        if chunk.id != pos {
            out.push(violation(
                "chunks",
                format!("chunk at position {pos} has id {}", chunk.id),
            ));
        }
    }

    if trace.method != Method::Goa {
        return out;
    }
    let n = trace.chunks.len();
    let Some(partition) = &trace.partition else {
        out.push(violation("partition", "goa trace has no partition".into()));
        return out;
    };
    if let Err(e) = partition.validate() {
        out.push(violation("partition", e.to_string()));
    }
    if partition.len() != n {
        out.push(violation(
            "partition",
            format!("covers {} items but there are {n} chunks", partition.len()),
        ));
        return out;
    }
    let Some(forest) = &trace.forest else {
        out.push(violation("forest", "goa trace has no forest".into()));
        return out;
    };
    if let Err(e) = forest.check_structure(n) {
        out.push(violation("forest", e));
        return out;
    }
    for path in &forest.paths {
        let members: Vec<usize> = path.member_ids.iter().copied().collect();
        if partition.members(path.cluster_index) != members {
            out.push(violation(
                "forest",
                format!(
                    "path {} members differ from its cluster",
                    path.cluster_index
                ),
            ));
        }
        if !path.is_complete() {
            out.push(violation(
                "forest",
                format!("path {} is incomplete", path.cluster_index),
            ));
        }
    }
    if forest.final_summaries() != trace.final_summaries {
        out.push(violation(
            "forest",
            "final summaries differ from the path ends".into(),
        ));
    }

    let query_vec = match embedder.embed(&trace.query) {
        Ok(v) => v,
        Err(e) => {
            out.push(violation("greedy", format!("cannot embed query: {e}")));
            return out;
        }
    };
    for path in &forest.paths {
        let p = path.cluster_index;
        for (step, &chosen) in path.order.iter().enumerate() {
            let prev = if step == 0 {
                ""
            } else {
                path.summaries[step - 1].as_str()
            };

            let worker = trace
                .calls
                .iter()
                .find(|c| c.role == AgentRole::Worker && c.path == Some(p) && c.step == step);
            match worker {
                Some(call) => {
                    let expected = render_worker_prompt(
                        prompts,
                        &trace.chunks[chosen].text,
                        prev,
                        &trace.query,
                    );
                    if call.chunk_id != Some(chosen)
                        || expected.as_deref().ok() != Some(call.prompt.as_str())
                    {
                        out.push(violation("chain", format!("path {p} step {step}: worker prompt does not match chunk {chosen} and its predecessor summary")));
                    }
                    if call.response != path.summaries[step] {
                        out.push(violation(
                            "chain",
                            format!("path {p} step {step}: summary differs from worker output"),
                        ));
                    }
                }
                None => out.push(violation(
                    "chain",
                    format!("path {p} step {step}: no worker call recorded"),
                )),
            }

            if cfg.selection != SelectionPolicy::Greedy {
                continue;
            }
            let remaining: Vec<&Chunk> = path
                .member_ids
                .iter()
                .filter(|id| !path.order[..step].contains(id))
                .map(|&id| &trace.chunks[id])
                .collect();
            let scores = match score_candidates(&query_vec, prev, &remaining, embedder) {
                Ok(s) => s,
                Err(e) => {
                    out.push(violation(
                        "greedy",
                        format!("path {p} step {step}: re-scoring failed: {e}"),
                    ));
                    continue;
                }
            };
            let recorded = path.selection_scores[step];
            let (best_id, best) = remaining
                .iter()
                .zip(&scores)
                .fold(None::<(usize, S)>, |acc, (c, &s)| match acc {
                    Some((id, top)) if s < top || (s == top && id < c.id) => Some((id, top)),
                    _ => Some((c.id, s)),
                })
                .expect("non-empty remaining set");
            if best_id != chosen || recorded.partial_cmp(&best).is_none_or(|o| o.is_lt()) {
                out.push(violation(
                    "greedy",
                    format!(
                        "path {p} step {step}: selected chunk {chosen} (recorded score {recorded}) but chunk {best_id} scores {best}"
                    ),
                ));
            }
        }
    }
    out
}
