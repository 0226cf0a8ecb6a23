use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RetrieverError;

/// Source of token embeddings with a fixed dimension.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, RetrieverError>;
}

/// Deterministic embedding: each distinct token string maps to a fixed
/// pseudo-random vector with entries uniform in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashEmbedding {
    pub dim: usize,
    pub seed: u64,
}

impl HashEmbedding {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        let mut key = Vec::with_capacity(8 + token.len());
        key.extend_from_slice(&self.seed.to_le_bytes());
        key.extend_from_slice(token.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(crate::math::fnv1a(&key));
        (0..self.dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }
}

impl EmbeddingProvider for HashEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[&str]) -> Result<Vec<Vec<f64>>, RetrieverError> {
        Ok(tokens.iter().map(|t| self.vector(t)).collect())
    }
}
