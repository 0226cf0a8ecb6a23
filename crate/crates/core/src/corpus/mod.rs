//! Documents, entity spans and the dataset restructuring toolkit.
//!
//! Offsets are Unicode code-point indices, `start` inclusive and `end`
//! exclusive, so a four-character Chinese entity at the start of a text
//! spans `(0, 4)` regardless of its UTF-8 byte length.

mod align;
mod bilou;
mod split;
mod stats;
mod tokenize;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use align::align_spans;
pub use bilou::{from_bilou, to_bilou, BilouTag, TaggedToken};
pub use split::{split, SplitSpec};
pub use stats::{compute_stats, DatasetStats};
pub use tokenize::{token_count, tokenize, Token, Tokenization};

pub type Dataset = Vec<Document>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("entity {value:?} has no free occurrence in the text")]
    UnalignableEntity { value: String },
    #[error("span ({start}, {end}) does not fall on token boundaries")]
    TokenBoundaryMismatch { start: usize, end: usize },
    #[error("malformed tag sequence at token {position}: {reason}")]
    MalformedTagSequence { position: usize, reason: &'static str },
    #[error("document {doc_id}: entity {value:?} at ({start}, {end}): {reason}")]
    InvalidSpan {
        doc_id: String,
        value: String,
        start: usize,
        end: usize,
        reason: &'static str,
    },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
}

/// Sentiment polarity of one entity mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

/// Bilingual label table. Matching is ASCII-case-insensitive.
const LABEL_MAP: &[(&str, Polarity)] = &[
    ("positive", Polarity::Positive),
    ("pos", Polarity::Positive),
    ("正面", Polarity::Positive),
    ("积极", Polarity::Positive),
    ("正向", Polarity::Positive),
    ("negative", Polarity::Negative),
    ("neg", Polarity::Negative),
    ("负面", Polarity::Negative),
    ("消极", Polarity::Negative),
    ("负向", Polarity::Negative),
    ("neutral", Polarity::Neutral),
    ("neu", Polarity::Neutral),
    ("中立", Polarity::Neutral),
    ("中性", Polarity::Neutral),
];

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];

    /// Normalizes an English or Chinese label string.
    pub fn from_label(label: &str) -> Option<Self> {
        let label = label.trim();
        LABEL_MAP
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(label))
            .map(|(_, p)| *p)
    }

    /// Lower-case label used in JSONL files.
    pub fn label(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    /// Capitalized English name used in prompts and BILOU tags.
    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "Positive",
            Polarity::Negative => "Negative",
            Polarity::Neutral => "Neutral",
        }
    }

    /// Chinese name used in zh prompts.
    pub fn name_zh(self) -> &'static str {
        match self {
            Polarity::Positive => "正面",
            Polarity::Negative => "负面",
            Polarity::Neutral => "中立",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }
    }

    /// Numeric sentiment score: +1, -1 or 0.
    pub fn score(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
            Polarity::Neutral => 0.0,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Polarity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Polarity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Polarity::from_label(&s)
            .ok_or_else(|| serde::de::Error::custom(alloc::format!("unknown polarity label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Zh,
}

impl Lang {
    pub fn as_str(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Zh => "zh",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityAnnotation {
    pub value: String,
    pub start: usize,
    pub end: usize,
    #[serde(rename = "tag")]
    pub sentiment: Polarity,
}

impl EntityAnnotation {
    pub fn new(value: impl Into<String>, start: usize, end: usize, sentiment: Polarity) -> Self {
        Self {
            value: value.into(),
            start,
            end,
            sentiment,
        }
    }

    pub fn overlaps(&self, other: &EntityAnnotation) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub lang: Lang,
    pub entities: Vec<EntityAnnotation>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: Lang) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            lang,
            entities: Vec::new(),
        }
    }

    pub fn with_entities(mut self, mut entities: Vec<EntityAnnotation>) -> Self {
        entities.sort_by_key(|a| (a.start, a.end));
        self.entities = entities;
        self
    }

    /// Length of the text in code points.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks every span invariant: bounds, surface form, ordering and
    /// pairwise disjointness.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let len = self.char_len();
        let bad = |e: &EntityAnnotation, reason| CorpusError::InvalidSpan {
            doc_id: self.id.clone(),
            value: e.value.clone(),
            start: e.start,
            end: e.end,
            reason,
        };
        for (i, e) in self.entities.iter().enumerate() {
            if e.start >= e.end || e.end > len {
                return Err(bad(e, "offsets out of range"));
            }
            if char_slice(&self.text, e.start, e.end) != Some(e.value.as_str()) {
                return Err(bad(e, "surface form does not match the text"));
            }
            if i > 0 {
                let prev = &self.entities[i - 1];
                if prev.start > e.start {
                    return Err(bad(e, "entities not sorted by start"));
                }
                if prev.overlaps(e) {
                    return Err(bad(e, "overlaps the previous entity"));
                }
            }
        }
        Ok(())
    }
}

/// Validates every document and checks id uniqueness.
pub fn validate_dataset(dataset: &[Document]) -> Result<(), CorpusError> {
    let mut seen = BTreeSet::new();
    for doc in dataset {
        doc.validate()?;
        if !seen.insert(doc.id.as_str()) {
            return Err(CorpusError::DuplicateId(doc.id.to_string()));
        }
    }
    Ok(())
}

/// Slices `text` by code-point offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut begin = None;
    let mut count = 0;
    for (byte, _) in text.char_indices() {
        if count == start {
            begin = Some(byte);
        }
        if count == end {
            return begin.map(|b| &text[b..byte]);
        }
        count += 1;
    }
    if count == end {
        let b = if start == count { Some(text.len()) } else { begin };
        return b.map(|b| &text[b..]);
    }
    None
}
