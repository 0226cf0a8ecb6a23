use alloc::vec;
use alloc::vec::Vec;

use super::{EmbeddingProvider, RetrieverError};
use crate::corpus::{tokenize, Document, Tokenization};

pub const DEFAULT_WINDOW: usize = 2;

/// Placeholder token for documents without any token.
const EMPTY_TOKEN: &str = "<empty>";

/// Token nodes with embedding features and symmetric adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGraph {
    /// Row-major `n × dim` node features.
    pub features: Vec<f64>,
    pub dim: usize,
    /// Sorted neighbour lists; every node lists itself.
    pub neighbors: Vec<Vec<usize>>,
}

impl TokenGraph {
    /// Sequential window graph: `i ~ j` iff `|i - j| <= window`.
    pub fn window(features: Vec<f64>, dim: usize, window: usize) -> Self {
        let n = features.len().checked_div(dim).unwrap_or(0);
        let neighbors = (0..n)
            .map(|i| (i.saturating_sub(window)..(i + window + 1).min(n)).collect())
            .collect();
        Self { features, dim, neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

/// One node per token (an empty document gets a single placeholder node).
pub fn build_graph(
    doc: &Document,
    provider: &dyn EmbeddingProvider,
    window: usize,
) -> Result<TokenGraph, RetrieverError> {
    let tokens = tokenize(&doc.text, Tokenization::default_for(doc.lang));
    let mut texts: Vec<&str> = tokens.iter().map(|t| t.text).collect();
    if texts.is_empty() {
        texts = vec![EMPTY_TOKEN];
    }
    let dim = provider.dim();
    let vectors = provider.embed(&texts)?;
    let mut features = Vec::with_capacity(texts.len() * dim);
    for v in &vectors {
        if v.len() != dim {
            return Err(RetrieverError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
        features.extend_from_slice(v);
    }
    if vectors.len() != texts.len() {
        return Err(RetrieverError::Embedding(alloc::format!(
            "provider returned {} vectors for {} tokens",
            vectors.len(),
            texts.len()
        )));
    }
    Ok(TokenGraph::window(features, dim, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Lang;
    use crate::retriever::HashEmbedding;

    #[test]
    fn single_token_has_only_self_loop() {
        let g = build_graph(&Document::new("a", "Rupiah", Lang::En), &HashEmbedding::new(4, 0), 2).unwrap();
        assert_eq!(g.neighbors, vec![vec![0]]);
    }

    #[test]
    fn window_two_adjacency() {
        let g = build_graph(&Document::new("a", "a b c d", Lang::En), &HashEmbedding::new(4, 0), 2).unwrap();
        assert_eq!(g.neighbors[0], vec![0, 1, 2]);
        assert_eq!(g.neighbors[1], vec![0, 1, 2, 3]);
        assert_eq!(g.neighbors[3], vec![1, 2, 3]);
        for (i, ns) in g.neighbors.iter().enumerate() {
            for &j in ns {
                assert!(g.neighbors[j].contains(&i));
            }
        }
    }

    #[test]
    fn deterministic_features() {
        let e = HashEmbedding::new(4, 9);
        let d = Document::new("a", "荣联科技", Lang::Zh);
        let g = build_graph(&d, &e, 2).unwrap();
        assert_eq!(g.n_nodes(), 4);
        assert_eq!(g, build_graph(&d, &e, 2).unwrap());
    }

    #[test]
    fn empty_doc_gets_placeholder() {
        let g = build_graph(&Document::new("a", " ", Lang::En), &HashEmbedding::new(3, 0), 2).unwrap();
        assert_eq!(g.n_nodes(), 1);
    }
}
