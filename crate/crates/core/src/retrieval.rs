//! Chunk scoring and top-κ selection for the retrieval baseline.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retriever {
    /// Cosine similarity of chunk and query embeddings.
    #[default]
    Embedding,
    /// Okapi BM25 over the chunk collection.
    Bm25,
}

/// Order in which retained chunks are placed into the prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RagOrder {
    #[default]
    Document,
    Score,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.5, b: 0.75 }
    }
}

/// Lowercased alphanumeric runs.
pub fn lexical_terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// BM25 score of every document for `query`:
///
/// `sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg_len))`
/// with `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`, which stays positive.
pub fn bm25_scores<S: Scalar>(documents: &[&str], query: &str, params: Bm25Params) -> Vec<S> {
    let docs: Vec<Vec<String>> = documents.iter().map(|d| lexical_terms(d)).collect();
    if docs.is_empty() {
        return Vec::new();
    }
    let n = docs.len() as f64;
    let avg_len = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in &docs {
        let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let query_terms = lexical_terms(query);
    docs.iter()
        .map(|doc| {
            let mut tf: HashMap<&str, usize> = HashMap::new();
            for t in doc {
                *tf.entry(t.as_str()).or_default() += 1;
            }
            let len_norm = if avg_len > 0.0 {
                doc.len() as f64 / avg_len
            } else {
                0.0
            };
            let score: f64 = query_terms
                .iter()
                .filter_map(|t| {
                    let f = *tf.get(t.as_str())? as f64;
                    let d = df[t.as_str()] as f64;
                    let idf = (1.0 + (n - d + 0.5) / (d + 0.5)).ln();
                    Some(
                        idf * f * (params.k1 + 1.0)
                            / (f + params.k1 * (1.0 - params.b + params.b * len_norm)),
                    )
                })
                .sum();
            S::of(score)
        })
        .collect()
}

/// Number of `chunk_len`-token chunks that fit in `available` tokens:
/// the largest `a` with `a * chunk_len <= available`.
pub fn kappa(available: usize, chunk_len: usize) -> usize {
    assert!(chunk_len > 0, "chunk length must be positive");
    available / chunk_len
}

/// Indices of the `k` highest scores, best first; ties go to the lower index.
pub fn top_k<S: Scalar>(scores: &[S], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_examples() {
        assert_eq!(kappa(2048, 300), 6);
        assert_eq!(kappa(1800, 300), 6);
        assert_eq!(kappa(299, 300), 0);
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let s = [0.5f64, 0.9, 0.5, 0.1];
        assert_eq!(top_k(&s, 3), vec![1, 0, 2]);
        assert_eq!(top_k(&s, 10), vec![1, 0, 2, 3]);
    }

    #[test]
    fn bm25_prefers_matching_documents() {
        let docs = [
            "the cat sat on the mat",
            "dogs chase cats",
            "a cat and a cat",
        ];
        let s: Vec<f64> = bm25_scores(&docs, "cat", Bm25Params::default());
        assert_eq!(s[1], 0.0);
        assert!(s[2] > s[0] && s[0] > 0.0);
    }

    #[test]
    fn bm25_single_term_by_hand() {
        // N = 2, df(x) = 1, idf = ln(1 + 1.5/1.5) = ln 2.
        // doc0 = [x, y]: len 2, avg 1.5, tf 1
        // score = ln2 * 2.5 / (1 + 1.5 * (0.25 + 0.75 * 2/1.5)).
        let s: Vec<f64> = bm25_scores(&["x y", "z"], "x", Bm25Params::default());
        let expected = 2f64.ln() * 2.5 / (1.0 + 1.5 * (0.25 + 0.75 * 2.0 / 1.5));
        assert!((s[0] - expected).abs() < 1e-12);
        assert_eq!(s[1], 0.0);
    }
}
