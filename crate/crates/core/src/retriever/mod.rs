//! Graph-attention example retriever.
//!
//! Each document becomes a token graph (sequential window plus self-loops)
//! over pluggable token embeddings. A shared linear projection feeds two
//! parallel GAT layers, one trained toward linguistic similarity and one
//! toward sentiment similarity; mean pooling yields one unit vector per
//! channel, plus a third "average" vector pooled from the projection alone.
//! Training is contrastive (temperature-scaled cross-entropy with in-batch
//! negatives) over document pairs mined with rule-based similarity
//! thresholds. Retrieval returns the nearest stored example per channel.

mod embed;
mod gat;
mod graph;
mod index;
mod model;
mod nsw;
mod pairs;
mod pos;
mod similarity;
mod train;

use alloc::string::String;

pub use embed::{EmbeddingProvider, HashEmbedding};
pub use gat::{GatCache, GatLayer};
pub use graph::{build_graph, TokenGraph, DEFAULT_WINDOW};
pub use index::{build_index, retrieve, ExactIndex, Hit, ReprChannel, Retrieved, VectorIndex};
pub use model::{DocForward, EncodedExample, ModelConfig, RetrieverModel};
pub use nsw::{NswIndex, NswParams};
pub use pairs::{make_pairs, ChannelPairs, PairSets};
pub use pos::{pos_bigram_vector, pos_tags, PosTag, BIGRAM_DIM};
pub use similarity::{linguistic_similarity, sentiment_similarity, SimilarityFeatures, SimilarityRules};
pub use train::{
    batch_loss_and_grad, contrastive_train, Batch, ChannelBatch, LossTrace, TrainConfig, TrainOutcome,
};

/// The two trained representation channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedChannel {
    Linguistic,
    Sentiment,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RetrieverError {
    #[error("embedding provider failed: {0}")]
    Embedding(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{channel:?} channel has no positive pairs at threshold {threshold}")]
    InsufficientPairs { channel: TrainedChannel, threshold: f64 },
    #[error("at least two training documents are required, got {0}")]
    TooFewDocuments(usize),
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },
    #[error("index was built with model {index_version}, query model is {model_version}")]
    StaleIndex { index_version: String, model_version: String },
    #[error("index is empty")]
    EmptyIndex,
}
