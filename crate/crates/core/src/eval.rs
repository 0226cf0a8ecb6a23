//! Strict tuple-level and relaxed membership scoring, run aggregation and RMSE.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Polarity};
use crate::gateway::PredictionRecord;

pub type Predictions = BTreeMap<String, Vec<PredictionRecord>>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction for unknown document {0:?}")]
    UnknownDocId(String),
    #[error("nothing to aggregate")]
    EmptyInput,
    #[error("series lengths differ: {pred} predictions vs {truth} targets")]
    LengthMismatch { pred: usize, truth: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Precision with no predictions (and recall with no gold) is 0.
    pub fn from_counts(c: Counts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub polarity: Polarity,
    #[serde(flatten)]
    pub scores: Prf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Counts>,
}

/// Strict scores: micro over all tuples, per polarity, and their macro mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub micro: Prf,
    pub per_class: Vec<ClassReport>,
    pub macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<Counts>,
}

impl EvalReport {
    pub fn class(&self, p: Polarity) -> &ClassReport {
        &self.per_class[p.index()]
    }

    fn from_counts(micro: Counts, per_class: [Counts; 3]) -> Self {
        let per_class: Vec<ClassReport> = Polarity::ALL
            .iter()
            .map(|&p| ClassReport {
                polarity: p,
                scores: Prf::from_counts(per_class[p.index()]),
                counts: Some(per_class[p.index()]),
            })
            .collect();
        let macro_f1 = per_class.iter().map(|c| c.scores.f1).sum::<f64>() / 3.0;
        Self {
            micro: Prf::from_counts(micro),
            per_class,
            macro_f1,
            counts: Some(micro),
        }
    }
}

type TupleKey<'a> = (&'a str, usize, usize, Polarity);

fn check_ids(gold: &[Document], pred: &Predictions) -> Result<BTreeMap<String, usize>, EvalError> {
    let index: BTreeMap<String, usize> = gold.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
    if let Some(id) = pred.keys().find(|id| !index.contains_key(*id)) {
        return Err(EvalError::UnknownDocId(id.clone()));
    }
    Ok(index)
}

/// Exact `(value, start, end, polarity)` matching, each gold tuple used at
/// most once. Gold documents absent from `pred` count as empty predictions.
pub fn strict_prf(gold: &[Document], pred: &Predictions) -> Result<EvalReport, EvalError> {
    check_ids(gold, pred)?;
    let mut micro = Counts::default();
    let mut per_class = [Counts::default(); 3];
    for doc in gold {
        let mut remaining: BTreeMap<TupleKey<'_>, usize> = BTreeMap::new();
        for e in &doc.entities {
            *remaining.entry((e.value.as_str(), e.start, e.end, e.sentiment)).or_default() += 1;
        }
        for r in pred.get(&doc.id).map(Vec::as_slice).unwrap_or_default() {
            let class = &mut per_class[r.tag.index()];
            match remaining.get_mut(&(r.value.as_str(), r.start, r.end, r.tag)) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    micro.tp += 1;
                    class.tp += 1;
                }
                _ => {
                    micro.fp += 1;
                    class.fp += 1;
                }
            }
        }
        for ((_, _, _, p), n) in remaining {
            micro.fn_ += n;
            per_class[p.index()].fn_ += n;
        }
    }
    Ok(EvalReport::from_counts(micro, per_class))
}

/// Offset-insensitive scores: entity surface forms and (value, polarity) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedReport {
    pub entity: Prf,
    pub sentiment: Prf,
    pub entity_f1: f64,
    pub sentiment_f1: f64,
}

/// Entity channel: multiset matching of predicted values against gold values.
/// Sentiment channel: a predicted `(value, polarity)` is correct when the
/// document's gold contains that pair; a gold pair is recalled when some
/// prediction carries it.
pub fn relaxed_f1(gold: &[Document], pred: &Predictions) -> Result<RelaxedReport, EvalError> {
    check_ids(gold, pred)?;
    let (mut ent_tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    let (mut sen_tp_pred, mut sen_tp_gold) = (0usize, 0usize);
    for doc in gold {
        let records = pred.get(&doc.id).map(Vec::as_slice).unwrap_or_default();
        n_pred += records.len();
        n_gold += doc.entities.len();

        let mut gold_values: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &doc.entities {
            *gold_values.entry(e.value.as_str()).or_default() += 1;
        }
        for r in records {
            if let Some(n) = gold_values.get_mut(r.value.as_str()) {
                if *n > 0 {
                    *n -= 1;
                    ent_tp += 1;
                }
            }
        }

        sen_tp_pred += records
            .iter()
            .filter(|r| doc.entities.iter().any(|e| e.value == r.value && e.sentiment == r.tag))
            .count();
        sen_tp_gold += doc
            .entities
            .iter()
            .filter(|e| records.iter().any(|r| e.value == r.value && e.sentiment == r.tag))
            .count();
    }
    let entity = Prf::from_counts(Counts {
        tp: ent_tp,
        fp: n_pred - ent_tp,
        fn_: n_gold - ent_tp,
    });
    let sen_p = ratio(sen_tp_pred, n_pred);
    let sen_r = ratio(sen_tp_gold, n_gold);
    let sentiment = Prf {
        precision: sen_p,
        recall: sen_r,
        f1: f1(sen_p, sen_r),
    };
    Ok(RelaxedReport {
        entity_f1: entity.f1,
        sentiment_f1: sentiment.f1,
        entity,
        sentiment,
    })
}

/// Field-wise mean of the score fields; counts are dropped.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = reports.len() as f64;
    let mean_prf = |get: &dyn Fn(&EvalReport) -> Prf| {
        let mut m = Prf::default();
        for r in reports {
            let p = get(r);
            m.precision += p.precision;
            m.recall += p.recall;
            m.f1 += p.f1;
        }
        Prf {
            precision: m.precision / n,
            recall: m.recall / n,
            f1: m.f1 / n,
        }
    };
    let per_class = Polarity::ALL
        .iter()
        .map(|&p| ClassReport {
            polarity: p,
            scores: mean_prf(&|r: &EvalReport| r.class(p).scores),
            counts: None,
        })
        .collect();
    Ok(EvalReport {
        micro: mean_prf(&|r: &EvalReport| r.micro),
        per_class,
        macro_f1: reports.iter().map(|r| r.macro_f1).sum::<f64>() / n,
        counts: None,
    })
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(crate::math::sqrt(sse / pred.len() as f64))
}
