//! Partitioning chunk embeddings into `k` clusters.
//!
//! Both methods start from a seeded farthest-point initialization: a random
//! first center, then repeatedly the point farthest from every chosen center.
//!
//! * k-medoids alternates nearest-medoid assignment with per-cluster medoid
//!   updates under cosine distance `1 - cos`.
//! * k-means runs Lloyd iterations under squared Euclidean distance; an empty
//!   cluster takes the point farthest from its own centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::scalar::Scalar;

pub const MAX_ITERATIONS: usize = 100;

/// Independent k-medoids initializations per call.
pub const KMEDOIDS_RESTARTS: u64 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("cannot cluster an empty set of vectors")]
    EmptyInput,
    #[error("number of clusters must be at least 1")]
    ZeroClusters,
    #[error("vectors have inconsistent dimensions")]
    DimensionMismatch,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    #[default]
    KMedoids,
    KMeans,
}

/// Assignment of item ids `0..n` to clusters `0..k`, every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    /// `assignments[id]` is the cluster of item `id`.
    assignments: Vec<usize>,
    k: usize,
    /// Medoid item id per cluster (k-medoids only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    representative_ids: Option<Vec<usize>>,
}

impl Partition {
    pub fn new(
        assignments: Vec<usize>,
        k: usize,
        representative_ids: Option<Vec<usize>>,
    ) -> Result<Self, ClusterError> {
        let p = Self {
            assignments,
            k,
            representative_ids,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the partition invariants; used after deserialization as well.
    pub fn validate(&self) -> Result<(), ClusterError> {
        let invalid = |msg: String| Err(ClusterError::InvalidPartition(msg));
        if self.k == 0 {
            return invalid("k is zero".into());
        }
        let mut sizes = vec![0usize; self.k];
        for (id, &c) in self.assignments.iter().enumerate() {
            if c >= self.k {
                return invalid(format!("item {id} assigned to cluster {c} >= k={}", self.k));
            }
            sizes[c] += 1;
        }
        if let Some(c) = sizes.iter().position(|&s| s == 0) {
            return invalid(format!("cluster {c} is empty"));
        }
        if let Some(reps) = &self.representative_ids {
            if reps.len() != self.k {
                return invalid(format!("{} representatives for k={}", reps.len(), self.k));
            }
            for (c, &r) in reps.iter().enumerate() {
                if self.assignments.get(r) != Some(&c) {
                    return invalid(format!("representative {r} is not a member of cluster {c}"));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn cluster_of(&self, id: usize) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn representative_ids(&self) -> Option<&[usize]> {
        self.representative_ids.as_deref()
    }

    /// Member ids of `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(id, _)| id)
            .collect()
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        (0..self.k).map(|c| self.members(c)).collect()
    }
}

/// Result of a clustering run with the objective after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutcome<S: Scalar> {
    pub partition: Partition,
    pub cost_history: Vec<S>,
}

pub fn cluster<S: Scalar>(
    vectors: &[EmbeddingVector<S>],
    k: usize,
    method: ClusterMethod,
    seed: u64,
) -> Result<Partition, ClusterError> {
    cluster_with_history(vectors, k, method, seed).map(|o| o.partition)
}

pub fn cluster_with_history<S: Scalar>(
    vectors: &[EmbeddingVector<S>],
    k: usize,
    method: ClusterMethod,
    seed: u64,
) -> Result<ClusterOutcome<S>, ClusterError> {
    if vectors.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    let dim = vectors[0].dim();
    if vectors.iter().any(|v| v.dim() != dim) {
        return Err(ClusterError::DimensionMismatch);
    }
    let k = k.min(vectors.len());
    match method {
        ClusterMethod::KMedoids => Ok(k_medoids(vectors, k, seed)),
        ClusterMethod::KMeans => Ok(k_means(vectors, k, seed)),
    }
}

/// Clustering objective of `partition`: summed cosine distance to each
/// cluster's medoid (its representatives when present, otherwise the best
/// member), or summed squared distance to each cluster's centroid.
pub fn partition_cost<S: Scalar>(
    vectors: &[EmbeddingVector<S>],
    partition: &Partition,
    method: ClusterMethod,
) -> Result<S, ClusterError> {
    partition.validate()?;
    if partition.len() != vectors.len() {
        return Err(ClusterError::InvalidPartition(format!(
            "partition covers {} items but {} vectors were given",
            partition.len(),
            vectors.len()
        )));
    }
    let clusters = partition.clusters();
    let cost = match method {
        ClusterMethod::KMedoids => {
            let dist = cosine_distances(vectors);
            clusters
                .iter()
                .enumerate()
                .fold(S::zero(), |acc, (c, members)| {
                    let medoid = match partition.representative_ids() {
                        Some(reps) => reps[c],
                        None => best_medoid(&dist, members, members[0]),
                    };
                    acc + members.iter().fold(S::zero(), |s, &i| s + dist[i][medoid])
                })
        }
        ClusterMethod::KMeans => clusters.iter().fold(S::zero(), |acc, members| {
            let centroid = centroid(vectors, members);
            acc + members.iter().fold(S::zero(), |s, &i| {
                s + squared_distance(vectors[i].values(), &centroid)
            })
        }),
    };
    Ok(cost)
}

fn cosine_distances<S: Scalar>(vectors: &[EmbeddingVector<S>]) -> Vec<Vec<S>> {
    let n = vectors.len();
    let mut dist = vec![vec![S::zero(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = vectors[i].dot(&vectors[j]).expect("dimensions checked");
            let d = (S::one() - cos.min(S::one())).max(S::zero());
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    dist
}

fn squared_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn centroid<S: Scalar>(vectors: &[EmbeddingVector<S>], members: &[usize]) -> Vec<S> {
    let dim = vectors[members[0]].dim();
    let mut sum = vec![S::zero(); dim];
    for &i in members {
        for (s, &v) in sum.iter_mut().zip(vectors[i].values()) {
            *s = *s + v;
        }
    }
    let n = S::of_usize(members.len());
    sum.into_iter().map(|s| s / n).collect()
}

/// Farthest-point initialization over an arbitrary pairwise distance.
fn spread_init<S: Scalar>(
    n: usize,
    k: usize,
    seed: u64,
    dist: impl Fn(usize, usize) -> S,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![rng.random_range(0..n)];
    let mut nearest: Vec<S> = (0..n).map(|i| dist(i, centers[0])).collect();
    while centers.len() < k {
        let mut pick: Option<usize> = None;
        for i in (0..n).filter(|i| !centers.contains(i)) {
            if pick.is_none_or(|p| nearest[i] > nearest[p]) {
                pick = Some(i);
            }
        }
        let next = pick.expect("k <= n leaves an unchosen point");
        centers.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dist(i, next));
        }
    }
    centers
}

fn best_medoid<S: Scalar>(dist: &[Vec<S>], members: &[usize], current: usize) -> usize {
    let total = |m: usize| members.iter().fold(S::zero(), |s, &j| s + dist[m][j]);
    let mut best = current;
    let mut best_total = total(current);
    // A swap must beat rounding noise so the loop cannot cycle on ties.
    let margin = S::epsilon() * S::of_usize(members.len().max(1)) * S::of(4.0);
    for &m in members {
        let t = total(m);
        if t < best_total - margin {
            best = m;
            best_total = t;
        }
    }
    best
}

/// Nearest-medoid labelling (each medoid labels itself) and its total cost.
fn assign_to_medoids<S: Scalar>(dist: &[Vec<S>], medoids: &[usize]) -> (Vec<usize>, S) {
    let mut cost = S::zero();
    let assignments = (0..dist.len())
        .map(|i| {
            let c = match medoids.iter().position(|&m| m == i) {
                Some(own) => own,
                None => {
                    let mut best = 0;
                    for c in 1..medoids.len() {
                        if dist[i][medoids[c]] < dist[i][medoids[best]] {
                            best = c;
                        }
                    }
                    best
                }
            };
            cost = cost + dist[i][medoids[c]];
            c
        })
        .collect();
    (assignments, cost)
}

/// Best of [`KMEDOIDS_RESTARTS`] seeded runs of [`k_medoids_once`]; ties keep
/// the earlier restart.
fn k_medoids<S: Scalar>(vectors: &[EmbeddingVector<S>], k: usize, seed: u64) -> ClusterOutcome<S> {
    let dist = cosine_distances(vectors);
    let mut best: Option<ClusterOutcome<S>> = None;
    for r in 0..KMEDOIDS_RESTARTS {
        let run = k_medoids_once(
            &dist,
            k,
            seed.wrapping_add(r.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        );
        let cost = *run.cost_history.last().expect("at least one iteration");
        if best
            .as_ref()
            .is_none_or(|b| cost < *b.cost_history.last().expect("non-empty"))
        {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

/// Alternating assignment / medoid update, then a swap phase that exchanges a
/// medoid with a non-medoid while that strictly lowers the total cost.
fn k_medoids_once<S: Scalar>(dist: &[Vec<S>], k: usize, seed: u64) -> ClusterOutcome<S> {
    let n = dist.len();
    let mut medoids = spread_init(n, k, seed, |i, j| dist[i][j]);
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let (assignments, cost) = assign_to_medoids(dist, &medoids);
        history.push(cost);
        let updated: Vec<usize> = (0..k)
            .map(|c| {
                let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
                best_medoid(dist, &members, medoids[c])
            })
            .collect();
        if updated == medoids {
            break;
        }
        medoids = updated;
    }

    let margin = S::epsilon() * S::of_usize(n) * S::of(4.0);
    let (mut assignments, mut cost) = assign_to_medoids(dist, &medoids);
    for _ in 0..MAX_ITERATIONS {
        let mut best: Option<(Vec<usize>, Vec<usize>, S)> = None;
        for c in 0..k {
            for h in (0..n).filter(|h| !medoids.contains(h)) {
                let mut trial = medoids.clone();
                trial[c] = h;
                let (labels, trial_cost) = assign_to_medoids(dist, &trial);
                let target = best.as_ref().map_or(cost - margin, |b| b.2);
                if trial_cost < target {
                    best = Some((trial, labels, trial_cost));
                }
            }
        }
        match best {
            Some((m, labels, c)) => {
                medoids = m;
                assignments = labels;
                cost = c;
                history.push(cost);
            }
            None => break,
        }
    }

    ClusterOutcome {
        partition: Partition::new(assignments, k, Some(medoids))
            .expect("medoids own their clusters"),
        cost_history: history,
    }
}

fn k_means<S: Scalar>(vectors: &[EmbeddingVector<S>], k: usize, seed: u64) -> ClusterOutcome<S> {
    let n = vectors.len();
    let seeds = spread_init(n, k, seed, |i, j| {
        squared_distance(vectors[i].values(), vectors[j].values())
    });
    let mut centroids: Vec<Vec<S>> = seeds
        .iter()
        .map(|&i| vectors[i].values().to_vec())
        .collect();
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();

    for _ in 0..MAX_ITERATIONS {
        let mut next: Vec<usize> = vectors
            .iter()
            .map(|v| {
                let mut best = 0;
                let mut best_d = squared_distance(v.values(), &centroids[0]);
                for (c, centroid) in centroids.iter().enumerate().skip(1) {
                    let d = squared_distance(v.values(), centroid);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect();

        // Repair empty clusters with the point farthest from its centroid.
        for c in 0..k {
            if next.contains(&c) {
                continue;
            }
            let mut sizes = vec![0usize; k];
            next.iter().for_each(|&a| sizes[a] += 1);
            let mut pick: Option<(usize, S)> = None;
            for (i, &a) in next.iter().enumerate() {
                if sizes[a] < 2 {
                    continue;
                }
                let d = squared_distance(vectors[i].values(), &centroids[a]);
                if pick.is_none_or(|(_, best)| d > best) {
                    pick = Some((i, d));
                }
            }
            let (i, _) = pick.expect("n >= k guarantees a cluster with two members");
            next[i] = c;
        }

        centroids = (0..k)
            .map(|c| {
                let members: Vec<usize> = (0..n).filter(|&i| next[i] == c).collect();
                centroid(vectors, &members)
            })
            .collect();
        history.push(next.iter().enumerate().fold(S::zero(), |s, (i, &c)| {
            s + squared_distance(vectors[i].values(), &centroids[c])
        }));

        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }

    ClusterOutcome {
        partition: Partition::new(assignments, k, None).expect("repair leaves no empty cluster"),
        cost_history: history,
    }
}
