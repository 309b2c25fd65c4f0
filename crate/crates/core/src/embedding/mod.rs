//! Unit-normalized embeddings, cosine similarity and embedding providers.

mod hash;
mod remote;

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::ProviderError;
use crate::scalar::Scalar;

pub use hash::{fnv1a64, hash_embed, splitmix64, HashEmbedder};
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding has a non-finite component")]
    NonFinite,
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("embedding has no components")]
    Empty,
    #[error("embedder returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Dense vector with unit Euclidean norm; dot product is cosine similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
#[serde(try_from = "Vec<S>", into = "Vec<S>")]
pub struct EmbeddingVector<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> EmbeddingVector<S> {
    /// Normalizes `values` to unit length.
    pub fn from_raw(values: Vec<S>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = values.iter().fold(S::zero(), |acc, &v| acc + v * v).sqrt();
        if norm == S::zero() || !norm.is_finite() {
            return Err(EmbeddingError::ZeroNorm);
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Unit basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index out of range");
        let mut values = vec![S::zero(); dim];
        values[index] = S::one();
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn norm(&self) -> S {
        self.values
            .iter()
            .fold(S::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<S, EmbeddingError> {
        if self.dim() != other.dim() {
            return Err(EmbeddingError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(S::zero(), |acc, (&a, &b)| acc + a * b))
    }
}

impl<S: Scalar> TryFrom<Vec<S>> for EmbeddingVector<S> {
    type Error = EmbeddingError;

    fn try_from(values: Vec<S>) -> Result<Self, Self::Error> {
        Self::from_raw(values)
    }
}

impl<S: Scalar> From<EmbeddingVector<S>> for Vec<S> {
    fn from(v: EmbeddingVector<S>) -> Self {
        v.values
    }
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
pub fn cosine_sim<S: Scalar>(
    a: &EmbeddingVector<S>,
    b: &EmbeddingVector<S>,
) -> Result<S, EmbeddingError> {
    let dot = a.dot(b)?;
    debug_assert!(dot.abs() <= S::one() + S::unit_tolerance());
    Ok(dot.max(-S::one()).min(S::one()))
}

/// Source of embeddings. Implementations must be shareable across threads and
/// return one vector per input text, in input order.
pub trait Embedder<S: Scalar>: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError>;

    fn dim(&self) -> usize;

    /// Provider and model name.
    fn identity(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector<S>, EmbeddingError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        match out.len() {
            1 => Ok(out.pop().expect("one vector")),
            got => Err(EmbeddingError::CountMismatch { expected: 1, got }),
        }
    }
}

impl<S: Scalar, E: Embedder<S> + ?Sized> Embedder<S> for &E {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

impl<S: Scalar, E: Embedder<S> + ?Sized> Embedder<S> for Box<E> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn identity(&self) -> String {
        (**self).identity()
    }
}

/// Memoizes an inner embedder by exact text. Only cache misses reach the
/// inner provider, batched in first-seen order.
pub struct CachedEmbedder<S: Scalar, E> {
    inner: E,
    cache: RwLock<HashMap<String, EmbeddingVector<S>>>,
}

impl<S: Scalar, E: Embedder<S>> CachedEmbedder<S, E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.cache.read().expect("embedding cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<S: Scalar, E: Embedder<S>> Embedder<S> for CachedEmbedder<S, E> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        let mut missing: Vec<String> = Vec::new();
        {
            let cache = self.cache.read().expect("embedding cache poisoned");
            for text in texts {
                if !cache.contains_key(text) && !missing.contains(text) {
                    missing.push(text.clone());
                }
            }
        }
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            if fresh.len() != missing.len() {
                return Err(EmbeddingError::CountMismatch {
                    expected: missing.len(),
                    got: fresh.len(),
                });
            }
            let mut cache = self.cache.write().expect("embedding cache poisoned");
            for (text, vec) in missing.into_iter().zip(fresh) {
                cache.entry(text).or_insert(vec);
            }
        }
        let cache = self.cache.read().expect("embedding cache poisoned");
        Ok(texts.iter().map(|t| cache[t].clone()).collect())
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn identity(&self) -> String {
        self.inner.identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> EmbeddingVector<f64> {
        EmbeddingVector::from_raw(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[0.6, 0.8]);
        assert_abs_diff_eq!(cosine_sim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(cosine_sim(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let diag = v(&[1.0, 1.0]);
        assert_abs_diff_eq!(
            cosine_sim(&v(&[1.0, 0.0]), &diag).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-8
        );
    }

    #[test]
    fn cosine_dimension_mismatch() {
        assert_eq!(
            cosine_sim(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch(2, 3))
        );
    }

    #[test]
    fn from_raw_rejects_degenerate() {
        assert_eq!(
            EmbeddingVector::<f64>::from_raw(vec![]),
            Err(EmbeddingError::Empty)
        );
        assert_eq!(
            EmbeddingVector::from_raw(vec![0.0, 0.0]),
            Err(EmbeddingError::ZeroNorm)
        );
        assert_eq!(
            EmbeddingVector::from_raw(vec![f64::NAN, 1.0]),
            Err(EmbeddingError::NonFinite)
        );
    }

    #[test]
    fn serde_normalizes_on_read() {
        let parsed: EmbeddingVector<f64> = serde_json::from_str("[3.0, 4.0]").unwrap();
        assert_eq!(parsed.values(), &[0.6, 0.8]);
        assert!(serde_json::from_str::<EmbeddingVector<f64>>("[0.0]").is_err());
    }

    #[test]
    fn f32_vectors_work() {
        let a = EmbeddingVector::<f32>::from_raw(vec![1.0, 2.0, 2.0]).unwrap();
        assert!((a.norm() - 1.0).abs() <= f32::unit_tolerance());
        assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() <= f32::unit_tolerance());
    }

    struct Counting {
        calls: std::sync::Mutex<Vec<usize>>,
    }

    impl Embedder<f64> for Counting {
        fn embed_batch(
            &self,
            texts: &[String],
        ) -> Result<Vec<EmbeddingVector<f64>>, EmbeddingError> {
            self.calls.lock().unwrap().push(texts.len());
            Ok(texts.iter().map(|t| hash_embed(t, 16, 0)).collect())
        }
        fn dim(&self) -> usize {
            16
        }
        fn identity(&self) -> String {
            "counting".into()
        }
    }

    #[test]
    fn cache_only_forwards_misses() {
        let cached = CachedEmbedder::new(Counting {
            calls: Default::default(),
        });
        let texts: Vec<String> = ["a", "b", "a"].iter().map(|s| s.to_string()).collect();
        let first = cached.embed_batch(&texts).unwrap();
        assert_eq!(first[0], first[2]);
        let second = cached.embed_batch(&["b".into(), "c".into()]).unwrap();
        assert_eq!(second[0], first[1]);
        assert_eq!(*cached.inner.calls.lock().unwrap(), vec![2, 1]);
        assert_eq!(cached.len(), 3);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(
            a in proptest::collection::vec(-10.0f64..10.0, 6),
            b in proptest::collection::vec(-10.0f64..10.0, 6),
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let (a, b) = (v(&a), v(&b));
            let ab = cosine_sim(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine_sim(&b, &a).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
            prop_assert!((cosine_sim(&a, &a).unwrap() - 1.0).abs() <= 1e-6);
            prop_assert!((a.norm() - 1.0).abs() <= 1e-6);
        }
    }
}
