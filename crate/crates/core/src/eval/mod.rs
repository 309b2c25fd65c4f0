//! QA scoring, aggregation across seeds, and query-similarity analysis.

mod dataset;
mod f1;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine_sim, Embedder, EmbeddingError};
use crate::parallel::parallel_map;
use crate::pipeline::{Method, RunTrace};
use crate::scalar::Scalar;

pub use dataset::{load_dataset, parse_dataset, DatasetError, LoadMode, LoadedDataset, QARecord};
pub use f1::{normalize_answer, qa_f1, token_f1};
pub use stats::{quantile, BoxStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub record_id: String,
    pub dataset: String,
    pub method: String,
    pub seed: u64,
    pub prediction: String,
    pub answers: Vec<String>,
    pub f1: f64,
    pub trace_ref: Option<String>,
    pub error: Option<String>,
}

impl EvalResult {
    pub fn recomputed_f1(&self) -> f64 {
        if self.error.is_some() {
            0.0
        } else {
            qa_f1(&self.prediction, &self.answers)
        }
    }
}

/// What a method runner hands back for one (record, seed) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutput {
    pub prediction: String,
    pub trace_ref: Option<String>,
}

/// A failed cell, optionally with the partial trace location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFault {
    pub message: String,
    pub trace_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMean {
    pub seed: u64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub records: usize,
    pub mean_f1: f64,
    /// Standard error of the per-seed means (0 with a single seed).
    pub std_error: f64,
    pub per_seed: Vec<SeedMean>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub method: String,
    pub seeds: Vec<u64>,
    pub datasets: Vec<DatasetSummary>,
    /// Mean of the per-dataset means.
    pub average: f64,
    /// Mean over every scored cell.
    pub pooled_mean: f64,
    pub failures: usize,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Folds results into per-dataset statistics. Order-independent: results are
/// sorted by (dataset, record, seed) first.
pub fn summarize(method: &str, results: &[EvalResult]) -> EvalSummary {
    let mut sorted: Vec<&EvalResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        (a.dataset.as_str(), a.record_id.as_str(), a.seed).cmp(&(
            b.dataset.as_str(),
            b.record_id.as_str(),
            b.seed,
        ))
    });
    let mut seeds: Vec<u64> = sorted.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();

    let mut by_dataset: BTreeMap<&str, Vec<&EvalResult>> = BTreeMap::new();
    for r in &sorted {
        by_dataset.entry(r.dataset.as_str()).or_default().push(r);
    }
    let datasets: Vec<DatasetSummary> = by_dataset
        .into_iter()
        .map(|(name, cells)| {
            let per_seed: Vec<SeedMean> = seeds
                .iter()
                .filter_map(|&seed| {
                    let scores: Vec<f64> = cells
                        .iter()
                        .filter(|r| r.seed == seed)
                        .map(|r| r.f1)
                        .collect();
                    (!scores.is_empty()).then(|| SeedMean {
                        seed,
                        mean_f1: mean(&scores),
                    })
                })
                .collect();
            let seed_means: Vec<f64> = per_seed.iter().map(|s| s.mean_f1).collect();
            let std_error = if seed_means.len() > 1 {
                let m = mean(&seed_means);
                let var = seed_means.iter().map(|x| (x - m).powi(2)).sum::<f64>()
                    / (seed_means.len() - 1) as f64;
                (var / seed_means.len() as f64).sqrt()
            } else {
                0.0
            };
            let mut ids: Vec<&str> = cells.iter().map(|r| r.record_id.as_str()).collect();
            ids.dedup();
            DatasetSummary {
                dataset: name.to_string(),
                records: ids.len(),
                mean_f1: mean(&cells.iter().map(|r| r.f1).collect::<Vec<_>>()),
                std_error,
                per_seed,
                failures: cells.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect();
    EvalSummary {
        method: method.to_string(),
        average: mean(&datasets.iter().map(|d| d.mean_f1).collect::<Vec<_>>()),
        pooled_mean: mean(&sorted.iter().map(|r| r.f1).collect::<Vec<_>>()),
        failures: sorted.iter().filter(|r| r.error.is_some()).count(),
        seeds,
        datasets,
    }
}

/// Runs every record under every seed (up to `max_parallel` at once) and
/// scores the predictions. A failed cell scores 0 and carries its error.
pub fn evaluate<F>(
    records: &[QARecord],
    method: &str,
    seeds: &[u64],
    max_parallel: usize,
    runner: F,
) -> (Vec<EvalResult>, EvalSummary)
where
    F: Fn(&QARecord, u64) -> Result<RunOutput, RunFault> + Sync,
{
    let cells: Vec<(usize, u64)> = (0..records.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = parallel_map(&cells, max_parallel, |_, &(i, seed)| {
        let record = &records[i];
        let (prediction, trace_ref, error) = match runner(record, seed) {
            Ok(out) => (out.prediction, out.trace_ref, None),
            Err(fault) => (String::new(), fault.trace_ref, Some(fault.message)),
        };
        let f1 = if error.is_some() {
            0.0
        } else {
            qa_f1(&prediction, &record.answers)
        };
        EvalResult {
            record_id: record.record_id.clone(),
            dataset: record.dataset.clone(),
            method: method.to_string(),
            seed,
            prediction,
            answers: record.answers.clone(),
            f1,
            trace_ref,
            error,
        }
    });
    let summary = summarize(method, &results);
    (results, summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SimilarityPoint<S: Scalar> {
    pub method: Method,
    pub trace: usize,
    pub similarity: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SimilarityReport<S: Scalar> {
    pub points: Vec<SimilarityPoint<S>>,
    pub per_method: BTreeMap<Method, BoxStats<S>>,
}

/// Cosine similarity between each trace's query and its compressed input
/// (see [`RunTrace::compressed_text`]), with box-plot statistics per method.
pub fn similarity_analysis<S: Scalar>(
    traces: &[RunTrace<S>],
    embedder: &dyn Embedder<S>,
) -> Result<SimilarityReport<S>, EmbeddingError> {
    let mut points = Vec::with_capacity(traces.len());
    for (i, trace) in traces.iter().enumerate() {
        let vectors = embedder.embed_batch(&[trace.compressed_text(), trace.query.clone()])?;
        if vectors.len() != 2 {
            return Err(EmbeddingError::CountMismatch {
                expected: 2,
                got: vectors.len(),
            });
        }
        points.push(SimilarityPoint {
            method: trace.method,
            trace: i,
            similarity: cosine_sim(&vectors[0], &vectors[1])?,
        });
    }
    let mut grouped: BTreeMap<Method, Vec<S>> = BTreeMap::new();
    for p in &points {
        grouped.entry(p.method).or_default().push(p.similarity);
    }
    let per_method = grouped
        .into_iter()
        .map(|(m, v)| (m, BoxStats::from_sample(&v).expect("non-empty group")))
        .collect();
    Ok(SimilarityReport { points, per_method })
}

/// Selection scores of one forest path against the best single chunk of
/// its cluster, where a chunk's own score is `cos(q, emb(chunk))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PathSelectionCheck<S: Scalar> {
    pub path: usize,
    pub steps: usize,
    pub first_score: S,
    pub final_score: S,
    pub best_single: S,
}

impl<S: Scalar> PathSelectionCheck<S> {
    /// The first greedy step scores chunks alone, so its winner is the best
    /// single chunk.
    pub fn first_step_holds(&self) -> bool {
        self.first_score >= self.best_single
    }

    pub fn final_step_holds(&self) -> bool {
        self.final_score >= self.best_single
    }
}

/// One check per path of a completed forest trace; empty for other traces.
pub fn selection_checks<S: Scalar>(
    trace: &RunTrace<S>,
    embedder: &dyn Embedder<S>,
) -> Result<Vec<PathSelectionCheck<S>>, EmbeddingError> {
    let Some(forest) = trace.forest.as_ref().filter(|_| trace.error.is_none()) else {
        return Ok(Vec::new());
    };
    let query = embedder.embed(&trace.query)?;
    let mut out = Vec::with_capacity(forest.paths.len());
    for path in &forest.paths {
        let (Some(&first_score), Some(&final_score)) =
            (path.selection_scores.first(), path.selection_scores.last())
        else {
            continue;
        };
        let texts: Vec<String> = path
            .member_ids
            .iter()
            .map(|&id| trace.chunks[id].text.clone())
            .collect();
        let vectors = embedder.embed_batch(&texts)?;
        let mut best_single: Option<S> = None;
        for v in &vectors {
            let s = cosine_sim(&query, v)?;
            best_single = Some(best_single.map_or(s, |b| b.max(s)));
        }
        out.push(PathSelectionCheck {
            path: path.cluster_index,
            steps: path.order.len(),
            first_score,
            final_score,
            best_single: best_single.expect("paths are non-empty"),
        });
    }
    Ok(out)
}
