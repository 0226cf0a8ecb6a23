//! Pure stages of the two-stage pipeline: correctness assessment, the
//! keep-ratio filter, correction records for stage 2 and fine-tuning export.
//! Model calls, IO and run orchestration live in the `silc` crate.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Lang};
use crate::eval::Predictions;
use crate::gateway::{correction_target, render_stage2, Channel, CorrectionExample, PredictionRecord, PromptTemplate, TemplateError};
use crate::retriever::{retrieve, EmbeddingProvider, ReprChannel, RetrieverError, RetrieverModel, VectorIndex};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("document {0:?} has no gold annotation")]
    UnknownDocId(String),
    #[error("document {0:?} has no pseudo-labels")]
    MissingPseudo(String),
    #[error("document {0:?} has not been assessed")]
    Unassessed(String),
    #[error("keep ratio must lie in [0, 1], got {0}")]
    InvalidKeepRatio(f64),
    #[error(transparent)]
    Retriever(#[from] RetrieverError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

impl From<ReprChannel> for Channel {
    fn from(c: ReprChannel) -> Self {
        match c {
            ReprChannel::Linguistic => Channel::Linguistic,
            ReprChannel::Sentiment => Channel::Sentiment,
            ReprChannel::Average => Channel::Average,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoEntry {
    pub records: Vec<PredictionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    /// Where the raw model reply is stored, if kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_ref: Option<String>,
}

/// Stage-1 output for one split, keyed by document id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub run_id: String,
    pub entries: BTreeMap<String, PseudoEntry>,
}

impl PseudoLabelSet {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, records: Vec<PredictionRecord>) {
        self.entries.insert(
            doc_id.into(),
            PseudoEntry {
                records,
                correct: None,
                raw_ref: None,
            },
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&PseudoEntry> {
        self.entries.get(doc_id)
    }

    pub fn predictions(&self) -> Predictions {
        self.entries.iter().map(|(k, v)| (k.clone(), v.records.clone())).collect()
    }

    /// Ids flagged correct and incorrect, each sorted.
    pub fn partition(&self) -> Result<(Vec<String>, Vec<String>), PipelineError> {
        let (mut cor, mut inc) = (Vec::new(), Vec::new());
        for (id, e) in &self.entries {
            match e.correct {
                Some(true) => cor.push(id.clone()),
                Some(false) => inc.push(id.clone()),
                None => return Err(PipelineError::Unassessed(id.clone())),
            }
        }
        Ok((cor, inc))
    }
}

/// Multiset equality of tuples.
pub fn same_tuples(a: &[PredictionRecord], b: &[PredictionRecord]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut x: Vec<&PredictionRecord> = a.iter().collect();
    let mut y: Vec<&PredictionRecord> = b.iter().collect();
    x.sort();
    y.sort();
    x == y
}

pub fn gold_records(doc: &Document) -> Vec<PredictionRecord> {
    doc.entities.iter().map(PredictionRecord::from).collect()
}

/// Flags each sample correct iff its predicted tuples equal the gold tuples
/// as multisets.
pub fn assess_correctness(mut pseudo: PseudoLabelSet, gold: &[Document]) -> Result<PseudoLabelSet, PipelineError> {
    let by_id: BTreeMap<&str, &Document> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    for (id, entry) in pseudo.entries.iter_mut() {
        let doc = by_id.get(id.as_str()).ok_or_else(|| PipelineError::UnknownDocId(id.clone()))?;
        entry.correct = Some(same_tuples(&entry.records, &gold_records(doc)));
    }
    Ok(pseudo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub keep_ratio: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { keep_ratio: 0.7, seed: 0 }
    }
}

/// `floor(r · n)`, tolerant of binary rounding such as `0.6 · 100 = 59.999…`.
pub fn keep_count(keep_ratio: f64, n_correct: usize) -> usize {
    crate::math::floor(keep_ratio * n_correct as f64 + 1e-9) as usize
}

/// All incorrect samples plus a seeded uniform sample of `floor(r·|correct|)`
/// correct ones. Returned ids are sorted.
pub fn filter_training_set(pseudo: &PseudoLabelSet, config: FilterConfig) -> Result<Vec<String>, PipelineError> {
    if !(0.0..=1.0).contains(&config.keep_ratio) {
        return Err(PipelineError::InvalidKeepRatio(config.keep_ratio));
    }
    let (mut correct, mut kept) = pseudo.partition()?;
    let k = keep_count(config.keep_ratio, correct.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    correct.shuffle(&mut rng);
    kept.extend(correct.into_iter().take(k));
    kept.sort();
    Ok(kept)
}

/// A filtered training sample with everything stage 2 needs to learn from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub doc_id: String,
    pub text: String,
    pub lang: Lang,
    pub pseudo: Vec<PredictionRecord>,
    pub correct: bool,
    pub gold: Vec<PredictionRecord>,
    pub neighbors: Vec<CorrectionExample>,
}

/// Labelled training material that retrieved examples are drawn from.
pub struct ExamplePool<'a> {
    docs: BTreeMap<&'a str, &'a Document>,
    pseudo: &'a PseudoLabelSet,
}

impl<'a> ExamplePool<'a> {
    pub fn new(docs: &'a [Document], pseudo: &'a PseudoLabelSet) -> Self {
        Self {
            docs: docs.iter().map(|d| (d.id.as_str(), d)).collect(),
            pseudo,
        }
    }

    pub fn example(&self, doc_id: &str, channel: Channel) -> Result<CorrectionExample, PipelineError> {
        let doc = self.docs.get(doc_id).ok_or_else(|| PipelineError::UnknownDocId(doc_id.into()))?;
        let entry = self.pseudo.get(doc_id).ok_or_else(|| PipelineError::MissingPseudo(doc_id.into()))?;
        let gold = gold_records(doc);
        Ok(CorrectionExample {
            doc_id: doc.id.clone(),
            text: doc.text.clone(),
            correct: entry.correct.unwrap_or_else(|| same_tuples(&entry.records, &gold)),
            pseudo: entry.records.clone(),
            gold,
            channel,
        })
    }

    /// Nearest pool member per channel, in linguistic, sentiment, average order.
    /// A pool with nothing but the query yields no examples.
    pub fn retrieved<I: VectorIndex + ?Sized>(
        &self,
        index: &I,
        model: &RetrieverModel,
        query: &Document,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Vec<CorrectionExample>, PipelineError> {
        let hits = match retrieve(index, model, query, provider) {
            Ok(h) => h,
            Err(RetrieverError::EmptyIndex) => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        ReprChannel::ALL
            .iter()
            .map(|&c| self.example(&hits.get(c).id, c.into()))
            .collect()
    }

    /// The "fixed examples" ablation: the first `k` pool ids after a seeded
    /// shuffle, used for every query.
    pub fn fixed(&self, k: usize, seed: u64) -> Result<Vec<CorrectionExample>, PipelineError> {
        let mut ids: Vec<&str> = self.docs.keys().copied().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        ids.truncate(k);
        ids.sort_unstable();
        ids.iter().map(|id| self.example(id, Channel::Fixed)).collect()
    }
}

/// One record per member of `filtered`, with neighbours retrieved from an
/// index built over the same members.
pub fn build_correction_records<I: VectorIndex + ?Sized>(
    filtered: &[Document],
    pseudo: &PseudoLabelSet,
    index: &I,
    model: &RetrieverModel,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<CorrectionRecord>, PipelineError> {
    let pool = ExamplePool::new(filtered, pseudo);
    filtered
        .iter()
        .map(|doc| {
            let me = pool.example(&doc.id, Channel::Fixed)?;
            Ok(CorrectionRecord {
                doc_id: me.doc_id,
                text: me.text,
                lang: doc.lang,
                pseudo: me.pseudo,
                correct: me.correct,
                gold: me.gold,
                neighbors: pool.retrieved(index, model, doc, provider)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePair {
    pub doc_id: String,
    pub prompt: String,
    pub target: String,
}

/// Instruction-tuning pairs: the stage-2 prompt and the gold verdict block.
pub fn export_finetune_pairs(records: &[CorrectionRecord], template: &PromptTemplate) -> Result<Vec<FinetunePair>, PipelineError> {
    records
        .iter()
        .map(|r| {
            let doc = Document::new(r.doc_id.clone(), r.text.clone(), r.lang);
            Ok(FinetunePair {
                doc_id: r.doc_id.clone(),
                prompt: render_stage2(template, &doc, &r.pseudo, &r.neighbors)?,
                target: correction_target(&r.gold, r.correct, r.lang),
            })
        })
        .collect()
}
