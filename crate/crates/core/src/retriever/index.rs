use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EncodedExample, RetrieverError, RetrieverModel};
use crate::corpus::Document;
use crate::math::dot;

/// The three representation channels searched at retrieval time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprChannel {
    Linguistic,
    Sentiment,
    Average,
}

impl ReprChannel {
    pub const ALL: [ReprChannel; 3] = [ReprChannel::Linguistic, ReprChannel::Sentiment, ReprChannel::Average];

    pub fn of(self, e: &EncodedExample) -> &[f64] {
        match self {
            ReprChannel::Linguistic => &e.h_lig,
            ReprChannel::Sentiment => &e.h_sen,
            ReprChannel::Average => &e.h_avg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Best first; equal scores resolve to the smaller id.
pub(crate) fn rank(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

/// Top-m cosine search over unit vectors, per channel.
pub trait VectorIndex {
    fn model_version(&self) -> &str;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Up to `m` hits ordered best first, skipping the entry named `exclude`.
    fn search(&self, channel: ReprChannel, query: &[f64], m: usize, exclude: Option<&str>) -> Vec<Hit>;
}

/// Exhaustive scan over every stored example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactIndex {
    pub model_version: String,
    pub examples: Vec<EncodedExample>,
}

impl VectorIndex for ExactIndex {
    fn model_version(&self) -> &str {
        &self.model_version
    }

    fn len(&self) -> usize {
        self.examples.len()
    }

    fn search(&self, channel: ReprChannel, query: &[f64], m: usize, exclude: Option<&str>) -> Vec<Hit> {
        let mut hits: Vec<Hit> = self
            .examples
            .iter()
            .filter(|e| Some(e.doc_id.as_str()) != exclude)
            .map(|e| Hit {
                id: e.doc_id.clone(),
                score: dot(query, channel.of(e)),
            })
            .collect();
        hits.sort_by(|a, b| rank((&a.id, a.score), (&b.id, b.score)));
        hits.truncate(m);
        hits
    }
}

/// Encodes `docs` with `model` into an exact index tagged with the model version.
pub fn build_index(
    model: &RetrieverModel,
    docs: &[Document],
    provider: &dyn EmbeddingProvider,
) -> Result<ExactIndex, RetrieverError> {
    let examples = docs
        .iter()
        .map(|d| model.encode(d, provider))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExactIndex {
        model_version: model.version(),
        examples,
    })
}

/// One nearest example per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub linguistic: Hit,
    pub sentiment: Hit,
    pub average: Hit,
}

impl Retrieved {
    pub fn get(&self, c: ReprChannel) -> &Hit {
        match c {
            ReprChannel::Linguistic => &self.linguistic,
            ReprChannel::Sentiment => &self.sentiment,
            ReprChannel::Average => &self.average,
        }
    }
}

/// Encodes `query` and returns the best stored example per channel,
/// never the query's own id.
pub fn retrieve<I: VectorIndex + ?Sized>(
    index: &I,
    model: &RetrieverModel,
    query: &Document,
    provider: &dyn EmbeddingProvider,
) -> Result<Retrieved, RetrieverError> {
    let version = model.version();
    if index.model_version() != version {
        return Err(RetrieverError::StaleIndex {
            index_version: index.model_version().into(),
            model_version: version,
        });
    }
    let q = model.encode(query, provider)?;
    let mut best = ReprChannel::ALL.iter().map(|&c| {
        index
            .search(c, c.of(&q), 1, Some(&query.id))
            .into_iter()
            .next()
            .ok_or(RetrieverError::EmptyIndex)
    });
    Ok(Retrieved {
        linguistic: best.next().unwrap()?,
        sentiment: best.next().unwrap()?,
        average: best.next().unwrap()?,
    })
}
