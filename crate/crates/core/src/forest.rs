//! Linear forest of worker paths and greedy next-chunk selection.
//!
//! Each cluster owns one path. At every step the path picks, among its
//! not-yet-visited chunks, the one whose text appended to the running summary
//! is most similar to the query:
//!
//! ```text
//! next = argmax_{c in remaining} cos(emb(query), emb(summary ++ "\n" ++ c.text))
//! ```
//!
//! with an empty summary contributing nothing (the first step scores the bare
//! chunk text). Ties go to the lowest chunk id.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Partition;
use crate::embedding::{cosine_sim, Embedder, EmbeddingError, EmbeddingVector};
use crate::scalar::Scalar;
use crate::text::Chunk;

pub const CANDIDATE_SEPARATOR: &str = "\n";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("chunk {0} was already selected on this path")]
    DuplicateSelection(usize),
    #[error("chunk {0} does not belong to this path's cluster")]
    ForeignChunk(usize),
    #[error("no remaining candidates to select from")]
    NoCandidates,
    #[error("partition covers {partition} items but there are {chunks} chunks")]
    SizeMismatch { partition: usize, chunks: usize },
    #[error("embedder failure: {0}")]
    Embedder(#[from] EmbeddingError),
}

/// How a path chooses its next chunk.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Greedy query-similarity maximization.
    #[default]
    Greedy,
    /// Lowest remaining chunk id first.
    DocumentOrder,
}

/// Text scored for candidate `chunk_text` after `prev_summary`.
pub fn candidate_text(prev_summary: &str, chunk_text: &str) -> String {
    if prev_summary.is_empty() {
        chunk_text.to_string()
    } else {
        format!("{prev_summary}{CANDIDATE_SEPARATOR}{chunk_text}")
    }
}

/// Similarity of every candidate, in the order given.
pub fn score_candidates<S: Scalar>(
    query_vec: &EmbeddingVector<S>,
    prev_summary: &str,
    candidates: &[&Chunk],
    embedder: &dyn Embedder<S>,
) -> Result<Vec<S>, ForestError> {
    let texts: Vec<String> = candidates
        .iter()
        .map(|c| candidate_text(prev_summary, &c.text))
        .collect();
    let vectors = embedder.embed_batch(&texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbeddingError::CountMismatch {
            expected: texts.len(),
            got: vectors.len(),
        }
        .into());
    }
    vectors
        .iter()
        .map(|v| cosine_sim(query_vec, v).map_err(ForestError::from))
        .collect()
}

/// Greedy choice of the next chunk; returns its id and winning similarity.
pub fn select_next<S: Scalar>(
    query_vec: &EmbeddingVector<S>,
    prev_summary: &str,
    remaining: &[&Chunk],
    embedder: &dyn Embedder<S>,
) -> Result<(usize, S), ForestError> {
    if remaining.is_empty() {
        return Err(ForestError::NoCandidates);
    }
    let scores = score_candidates(query_vec, prev_summary, remaining, embedder)?;
    let mut best: Option<(usize, S)> = None;
    for (chunk, &score) in remaining.iter().zip(&scores) {
        let better = match best {
            None => true,
            Some((id, top)) => score > top || (score == top && chunk.id < id),
        };
        if better {
            best = Some((chunk.id, score));
        }
    }
    Ok(best.expect("non-empty candidates"))
}

/// Applies `policy`; document order still reports the chosen candidate's score.
pub fn select_with_policy<S: Scalar>(
    policy: SelectionPolicy,
    query_vec: &EmbeddingVector<S>,
    prev_summary: &str,
    remaining: &[&Chunk],
    embedder: &dyn Embedder<S>,
) -> Result<(usize, S), ForestError> {
    match policy {
        SelectionPolicy::Greedy => select_next(query_vec, prev_summary, remaining, embedder),
        SelectionPolicy::DocumentOrder => {
            let first = remaining
                .iter()
                .min_by_key(|c| c.id)
                .ok_or(ForestError::NoCandidates)?;
            let score = score_candidates(query_vec, prev_summary, &[*first], embedder)?[0];
            Ok((first.id, score))
        }
    }
}

/// One cluster's path: the visiting order and the summary after each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PathState<S: Scalar> {
    pub cluster_index: usize,
    pub member_ids: BTreeSet<usize>,
    pub order: Vec<usize>,
    pub summaries: Vec<String>,
    pub selection_scores: Vec<S>,
}

impl<S: Scalar> PathState<S> {
    pub fn new(cluster_index: usize, member_ids: BTreeSet<usize>) -> Self {
        Self {
            cluster_index,
            member_ids,
            order: Vec::new(),
            summaries: Vec::new(),
            selection_scores: Vec::new(),
        }
    }

    /// Returns the state after one select-and-summarize step; `self` is untouched.
    pub fn advance(&self, chunk_id: usize, summary: String, score: S) -> Result<Self, ForestError> {
        if !self.member_ids.contains(&chunk_id) {
            return Err(ForestError::ForeignChunk(chunk_id));
        }
        if self.order.contains(&chunk_id) {
            return Err(ForestError::DuplicateSelection(chunk_id));
        }
        let mut next = self.clone();
        next.order.push(chunk_id);
        next.summaries.push(summary);
        next.selection_scores.push(score);
        Ok(next)
    }

    /// Summary handed to the next worker; empty before the first step.
    pub fn last_summary(&self) -> &str {
        self.summaries.last().map_or("", String::as_str)
    }

    /// Members not yet visited, ascending.
    pub fn remaining(&self) -> Vec<usize> {
        self.member_ids
            .iter()
            .copied()
            .filter(|id| !self.order.contains(id))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.order.len() == self.member_ids.len()
    }
}

pub fn advance_path<S: Scalar>(
    path: &PathState<S>,
    chunk_id: usize,
    summary: String,
    score: S,
) -> Result<PathState<S>, ForestError> {
    path.advance(chunk_id, summary, score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LinearForest<S: Scalar> {
    pub paths: Vec<PathState<S>>,
}

impl<S: Scalar> LinearForest<S> {
    pub fn is_complete(&self) -> bool {
        self.paths.iter().all(PathState::is_complete)
    }

    /// Final summary of every path in cluster order.
    pub fn final_summaries(&self) -> Vec<String> {
        self.paths
            .iter()
            .map(|p| p.last_summary().to_string())
            .collect()
    }

    /// Checks that paths are disjoint, cover `0..n` and (once complete) visit
    /// each member exactly once. Returns a description of the first violation.
    pub fn check_structure(&self, n: usize) -> Result<(), String> {
        let mut seen = vec![false; n];
        for path in &self.paths {
            for &id in &path.member_ids {
                if id >= n {
                    return Err(format!(
                        "path {} has member {id} outside 0..{n}",
                        path.cluster_index
                    ));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(format!("chunk {id} appears in more than one path"));
                }
            }
            if path.order.len() != path.summaries.len()
                || path.order.len() != path.selection_scores.len()
            {
                return Err(format!(
                    "path {} has misaligned step records",
                    path.cluster_index
                ));
            }
            let visited: BTreeSet<usize> = path.order.iter().copied().collect();
            if visited.len() != path.order.len() {
                return Err(format!("path {} visits a chunk twice", path.cluster_index));
            }
            if !visited.is_subset(&path.member_ids) {
                return Err(format!(
                    "path {} visits a foreign chunk",
                    path.cluster_index
                ));
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(format!("chunk {id} is not in any path"));
        }
        Ok(())
    }
}

pub fn init_forest<S: Scalar>(
    partition: &Partition,
    chunks: &[Chunk],
) -> Result<LinearForest<S>, ForestError> {
    if partition.len() != chunks.len() {
        return Err(ForestError::SizeMismatch {
            partition: partition.len(),
            chunks: chunks.len(),
        });
    }
    let paths = partition
        .clusters()
        .into_iter()
        .enumerate()
        .map(|(c, members)| PathState::new(c, members.into_iter().collect()))
        .collect();
    Ok(LinearForest { paths })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{hash_embed, HashEmbedder};

    fn chunk(id: usize, text: &str) -> Chunk {
        Chunk {
            id,
            text: text.into(),
            token_count: text.split_whitespace().count(),
            char_span: (0, 0),
        }
    }

    #[test]
    fn forced_choice_scores_bare_chunk() {
        let emb = HashEmbedder::new(256, 0);
        let q = hash_embed::<f64>("red apples", 256, 0);
        let c = chunk(3, "apples are red fruit");
        let (id, score) = select_next(&q, "", &[&c], &emb).unwrap();
        assert_eq!(id, 3);
        let expected = cosine_sim(&q, &hash_embed("apples are red fruit", 256, 0)).unwrap();
        assert_eq!(score, expected);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let emb = HashEmbedder::new(64, 0);
        let q = hash_embed::<f64>("x y", 64, 0);
        let (a, b) = (chunk(5, "same text"), chunk(2, "same text"));
        assert_eq!(select_next(&q, "ctx", &[&a, &b], &emb).unwrap().0, 2);
    }

    #[test]
    fn greedy_matches_exhaustive_scoring() {
        let emb = HashEmbedder::new(256, 0);
        let q = hash_embed::<f64>("red apples", 256, 0);
        let chunks = [
            chunk(0, "apples are red fruit"),
            chunk(1, "trains run on rails"),
            chunk(2, "blue whales swim"),
        ];
        let refs: Vec<&Chunk> = chunks.iter().collect();
        let scores: Vec<f64> = chunks
            .iter()
            .map(|c| cosine_sim(&q, &hash_embed(&c.text, 256, 0)).unwrap())
            .collect();
        let oracle = (0..3).fold(0, |best, i| if scores[i] > scores[best] { i } else { best });
        assert_eq!(oracle, 0);
        assert_eq!(select_next(&q, "", &refs, &emb).unwrap(), (0, scores[0]));
    }

    #[test]
    fn candidate_text_joins_with_newline() {
        assert_eq!(candidate_text("", "c"), "c");
        assert_eq!(candidate_text("z", "c"), "z\nc");
    }

    #[test]
    fn empty_candidates_rejected() {
        let emb = HashEmbedder::new(8, 0);
        let q = hash_embed::<f64>("q", 8, 0);
        assert_eq!(
            select_next(&q, "", &[], &emb),
            Err(ForestError::NoCandidates)
        );
    }

    #[test]
    fn document_order_policy_picks_lowest_id() {
        let emb = HashEmbedder::new(64, 0);
        let q = hash_embed::<f64>("whales", 64, 0);
        let (a, b) = (chunk(4, "blue whales"), chunk(1, "trains"));
        let (id, _) =
            select_with_policy(SelectionPolicy::DocumentOrder, &q, "", &[&a, &b], &emb).unwrap();
        assert_eq!(id, 1);
    }

    #[test]
    fn init_forest_builds_one_path_per_cluster() {
        let chunks: Vec<Chunk> = (0..4).map(|i| chunk(i, "t")).collect();
        let p = Partition::new(vec![0, 0, 1, 1], 2, None).unwrap();
        let forest: LinearForest<f64> = init_forest(&p, &chunks).unwrap();
        assert_eq!(forest.paths.len(), 2);
        assert_eq!(forest.paths[0].member_ids, BTreeSet::from([0, 1]));
        assert_eq!(forest.paths[1].member_ids, BTreeSet::from([2, 3]));
        assert!(forest.paths.iter().all(|p| p.order.is_empty()));
        assert!(forest.check_structure(4).is_ok());

        let single: LinearForest<f64> =
            init_forest(&Partition::new(vec![0; 4], 1, None).unwrap(), &chunks).unwrap();
        assert_eq!(single.paths[0].member_ids.len(), 4);
    }

    #[test]
    fn advance_is_value_semantic_and_checked() {
        let path: PathState<f64> = PathState::new(0, BTreeSet::from([1, 2]));
        let next = path.advance(2, "s".into(), 0.5).unwrap();
        assert!(path.order.is_empty());
        assert_eq!(next.order, vec![2]);
        assert_eq!(next.summaries, vec!["s".to_string()]);
        assert_eq!(next.selection_scores, vec![0.5]);
        assert_eq!(
            next.advance(2, "t".into(), 0.1),
            Err(ForestError::DuplicateSelection(2))
        );
        assert_eq!(
            next.advance(7, "t".into(), 0.1),
            Err(ForestError::ForeignChunk(7))
        );
        let done = next.advance(1, "t".into(), 0.1).unwrap();
        assert!(done.is_complete());
        assert_eq!(done.last_summary(), "t");
    }
}
