//! Deterministic feature-hashing embedder for offline runs and tests.
//!
//! Each lowercase whitespace token `t` is hashed as
//! `h = FNV-1a-64(seed as 8 little-endian bytes ++ utf8(t))`
//! (offset basis `0xcbf29ce484222325`, prime `0x100000001b3`).
//! The token adds `sign` to bucket `h mod dim`, where `sign` is `-1` when the
//! top bit of `splitmix64(h)` is set and `+1` otherwise. The count vector is
//! unit-normalized; an all-zero vector becomes `e_0`.

use super::{Embedder, EmbeddingError, EmbeddingVector};
use crate::scalar::Scalar;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// SplitMix64 output function (Steele, Lea & Flood constants).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn hash_embed<S: Scalar>(text: &str, dim: usize, seed: u64) -> EmbeddingVector<S> {
    assert!(dim >= 8, "hash embedding dimension must be at least 8");
    let mut counts = vec![0i64; dim];
    for token in text.to_lowercase().split_whitespace() {
        let h = fnv1a64(seed.to_le_bytes().into_iter().chain(token.bytes()));
        let bucket = (h % dim as u64) as usize;
        let sign = if splitmix64(h) >> 63 == 1 { -1 } else { 1 };
        counts[bucket] += sign;
    }
    if counts.iter().all(|&c| c == 0) {
        return EmbeddingVector::basis(dim, 0);
    }
    let values = counts.into_iter().map(|c| S::of(c as f64)).collect();
    EmbeddingVector::from_raw(values).expect("non-zero finite counts")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 8, "hash embedding dimension must be at least 8");
        Self { dim, seed }
    }
}

impl<S: Scalar> Embedder<S> for HashEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbeddingError> {
        Ok(texts
            .iter()
            .map(|t| hash_embed(t, self.dim, self.seed))
            .collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("hash/fnv1a64-d{}-s{}", self.dim, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine_sim;

    #[test]
    fn fnv_reference_vectors() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(*b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(*b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(*b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference() {
        // First output of SplitMix64 seeded with 0.
        assert_eq!(splitmix64(0), 0xe220a8397b1dcdaf);
    }

    #[test]
    fn deterministic_and_unit() {
        let a: EmbeddingVector<f64> = hash_embed("The quick brown fox", 64, 7);
        let b: EmbeddingVector<f64> = hash_embed("the QUICK brown  fox", 64, 7);
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        let c: EmbeddingVector<f64> = hash_embed("The quick brown fox", 64, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_text_maps_to_first_basis_vector() {
        let e: EmbeddingVector<f64> = hash_embed("   ", 16, 0);
        assert_eq!(e, EmbeddingVector::basis(16, 0));
    }

    #[test]
    fn identical_text_has_unit_similarity() {
        let a: EmbeddingVector<f64> = hash_embed("apple banana", 256, 0);
        let b: EmbeddingVector<f64> = hash_embed("apple banana", 256, 0);
        assert_eq!(a, b);
        assert!((cosine_sim(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_tokens_rank_higher() {
        let base: EmbeddingVector<f64> = hash_embed("apple banana", 256, 0);
        let near = hash_embed("apple cherry", 256, 0);
        let far = hash_embed("dog fox", 256, 0);
        assert!(cosine_sim(&base, &near).unwrap() > cosine_sim(&base, &far).unwrap());
    }

    #[test]
    #[should_panic(expected = "at least 8")]
    fn tiny_dimension_rejected() {
        let _: EmbeddingVector<f64> = hash_embed("x", 4, 0);
    }
}
