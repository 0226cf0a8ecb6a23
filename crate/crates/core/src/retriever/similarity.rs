use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::pos::pos_bigram_vector;
use crate::corpus::Document;
use crate::math::cosine;

/// Positive-pair thresholds for the two trained channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityRules {
    pub theta_lig: f64,
    pub theta_sen: f64,
}

impl SimilarityRules {
    pub const FINENTITY: SimilarityRules = SimilarityRules { theta_lig: 0.37, theta_sen: 0.8 };
    pub const SENTFIN: SimilarityRules = SimilarityRules { theta_lig: 0.46, theta_sen: 0.8 };
    pub const FINENTCN: SimilarityRules = SimilarityRules { theta_lig: 0.15, theta_sen: 0.7 };

    pub fn new(theta_lig: f64, theta_sen: f64) -> Self {
        Self { theta_lig, theta_sen }
    }

    /// Preset thresholds by dataset name.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "finentity" => Some(Self::FINENTITY),
            "sentfinspan" | "sentfin" => Some(Self::SENTFIN),
            "finentcn" | "efsa" => Some(Self::FINENTCN),
            _ => None,
        }
    }
}

/// Per-document rule features, computed once per training set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityFeatures {
    pub bigrams: Vec<f64>,
    pub polarity: [f64; 3],
}

impl SimilarityFeatures {
    pub fn of(doc: &Document) -> Self {
        let mut polarity = [0.0; 3];
        for e in &doc.entities {
            polarity[e.sentiment.index()] += 1.0;
        }
        Self {
            bigrams: pos_bigram_vector(doc),
            polarity,
        }
    }

    pub fn linguistic(&self, other: &Self) -> f64 {
        clamp01(cosine(&self.bigrams, &other.bigrams))
    }

    pub fn sentiment(&self, other: &Self) -> f64 {
        clamp01(cosine(&self.polarity, &other.polarity))
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Cosine between coarse POS-bigram count vectors.
pub fn linguistic_similarity(a: &Document, b: &Document) -> f64 {
    clamp01(cosine(&pos_bigram_vector(a), &pos_bigram_vector(b)))
}

/// Cosine between per-document polarity count vectors.
pub fn sentiment_similarity(a: &Document, b: &Document) -> f64 {
    SimilarityFeatures::of(a).sentiment(&SimilarityFeatures::of(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityAnnotation, Lang, Polarity};

    fn doc(text: &str, tags: &[Polarity]) -> Document {
        let ents = tags
            .iter()
            .enumerate()
            .map(|(i, p)| EntityAnnotation::new("x", i, i + 1, *p))
            .collect();
        Document::new("d", text, Lang::En).with_entities(ents)
    }

    #[test]
    fn hand_tagged_bigram_cosine() {
        // Noun Verb Other  vs  Func Noun Verb: only Noun→Verb is shared out of 4 bigrams each
        let a = Document::new("a", "Apple rose sharply", Lang::En);
        let b = Document::new("b", "the stock fell", Lang::En);
        assert!((linguistic_similarity(&a, &b) - 0.25).abs() < 1e-12);
        assert!((linguistic_similarity(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(linguistic_similarity(&a, &Document::new("e", "", Lang::En)), 0.0);
    }

    #[test]
    fn polarity_cosine() {
        use Polarity::*;
        let p = doc("x", &[Positive, Positive]);
        assert!((sentiment_similarity(&p, &doc("x", &[Positive])) - 1.0).abs() < 1e-12);
        assert_eq!(sentiment_similarity(&p, &doc("x", &[Negative])), 0.0);
        let a = doc("x", &[Positive, Positive, Negative]);
        let b = doc("x", &[Positive, Negative]);
        assert!((sentiment_similarity(&a, &b) - 3.0 / libm::sqrt(10.0)).abs() < 1e-12);
        assert_eq!(sentiment_similarity(&a, &doc("x", &[])), 0.0);
    }

    #[test]
    fn presets() {
        assert_eq!(SimilarityRules::preset("SEntFiN-Span"), Some(SimilarityRules::SENTFIN));
        assert_eq!(SimilarityRules::preset("FinEntCN").unwrap().theta_lig, 0.15);
        assert!(SimilarityRules::preset("other").is_none());
    }
}
