use serde::{Deserialize, Serialize};

use super::{token_count, Document, Polarity, Tokenization};

/// Corpus-level counts in the layout of a dataset statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_texts: usize,
    pub n_single_entity: usize,
    pub n_multi_entity: usize,
    pub avg_len_tokens: f64,
    pub max_len: usize,
    pub min_len: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_neutral: usize,
    pub n_entities: usize,
    pub avg_entities_per_text: f64,
}

impl DatasetStats {
    pub fn polarity_count(&self, p: Polarity) -> usize {
        match p {
            Polarity::Positive => self.n_positive,
            Polarity::Negative => self.n_negative,
            Polarity::Neutral => self.n_neutral,
        }
    }

    /// Entities per text rounded to two decimals, as reported.
    pub fn avg_entities_rounded(&self) -> f64 {
        crate::math::round(self.avg_entities_per_text * 100.0) / 100.0
    }
}

/// Computes corpus statistics; lengths use each document's default tokenizer.
pub fn compute_stats(dataset: &[Document]) -> DatasetStats {
    let mut s = DatasetStats {
        n_texts: dataset.len(),
        n_single_entity: 0,
        n_multi_entity: 0,
        avg_len_tokens: 0.0,
        max_len: 0,
        min_len: 0,
        n_positive: 0,
        n_negative: 0,
        n_neutral: 0,
        n_entities: 0,
        avg_entities_per_text: 0.0,
    };
    if dataset.is_empty() {
        return s;
    }
    let mut total_len = 0usize;
    s.min_len = usize::MAX;
    for doc in dataset {
        let len = token_count(&doc.text, Tokenization::default_for(doc.lang));
        total_len += len;
        s.max_len = s.max_len.max(len);
        s.min_len = s.min_len.min(len);
        match doc.entities.len() {
            0 => {}
            1 => s.n_single_entity += 1,
            _ => s.n_multi_entity += 1,
        }
        for e in &doc.entities {
            match e.sentiment {
                Polarity::Positive => s.n_positive += 1,
                Polarity::Negative => s.n_negative += 1,
                Polarity::Neutral => s.n_neutral += 1,
            }
        }
        s.n_entities += doc.entities.len();
    }
    s.avg_len_tokens = total_len as f64 / dataset.len() as f64;
    s.avg_entities_per_text = s.n_entities as f64 / dataset.len() as f64;
    s
}
