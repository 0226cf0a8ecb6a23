//! Stage execution over a gateway: per-document prompting in parallel,
//! parsing with one re-prompt, fallbacks, and incident logging.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use silc_core::corpus::Document;
use silc_core::eval::Predictions;
use silc_core::gateway::{parse_prediction, render_stage1, render_stage2, CorrectionExample, PredictionRecord, Stage, TemplateSet};
use silc_core::pipeline::PseudoLabelSet;

use crate::error::{Error, Result};
use crate::gateway::{Gateway, GatewayError, RequestId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Incident {
    pub stage: Stage,
    pub doc_id: String,
    pub kind: IncidentKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncidentKind {
    /// Unparseable after the re-prompt; the fallback labels were used.
    ParseFailure,
    /// The backend call failed; the fallback labels were used.
    BackendFailure,
}

/// How a stage picks its prompt template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateChoice {
    Id(String),
    /// Seeded choice among the variants for the document's language.
    Random { random_seed: u64 },
}

impl Default for TemplateChoice {
    fn default() -> Self {
        TemplateChoice::Random { random_seed: 0 }
    }
}

impl TemplateChoice {
    fn resolve<'t>(&self, set: &'t TemplateSet, stage: Stage, doc: &Document) -> Result<&'t silc_core::gateway::PromptTemplate> {
        match self {
            TemplateChoice::Id(id) => Ok(set.get(id)?),
            TemplateChoice::Random { random_seed } => Ok(set.pick(stage, doc.lang, *random_seed, &doc.id)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunnerConfig {
    pub workers: usize,
    /// A stage aborts when more than this share of its backend calls fail.
    pub failure_ceiling: f64,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            failure_ceiling: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageOutput {
    pub predictions: Predictions,
    pub raw: BTreeMap<String, String>,
    pub incidents: Vec<Incident>,
}

/// Applies `f` to every item on up to `workers` threads; results keep the
/// input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut out: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= items.len() {
                            break local;
                        }
                        local.push((i, f(&items[i])));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, r)| r).collect()
}

enum Outcome {
    Parsed(Vec<PredictionRecord>, String),
    Unparsed(String),
    Failed(GatewayError),
}

fn ask(gw: &Gateway, stage: Stage, doc_id: &str, prompt: &str) -> Outcome {
    let mut last_raw = String::new();
    for round in 0..2 {
        let id = RequestId {
            stage,
            doc_id: doc_id.to_string(),
            round,
        };
        match gw.complete(prompt, &id) {
            Ok(c) => match parse_prediction(&c.text) {
                Ok(recs) => return Outcome::Parsed(recs, c.text),
                Err(e) => {
                    log::warn!("{id}: {e}");
                    last_raw = c.text;
                }
            },
            Err(e) => return Outcome::Failed(e),
        }
    }
    Outcome::Unparsed(last_raw)
}

fn collect(
    stage: Stage,
    ids: impl Iterator<Item = String>,
    outcomes: Vec<Outcome>,
    fallback: impl Fn(&str) -> Vec<PredictionRecord>,
    cfg: RunnerConfig,
) -> Result<StageOutput> {
    let mut out = StageOutput::default();
    let total = outcomes.len();
    let mut failed = 0;
    for (id, o) in ids.zip(outcomes) {
        let records = match o {
            Outcome::Parsed(r, raw) => {
                out.raw.insert(id.clone(), raw);
                r
            }
            Outcome::Unparsed(raw) => {
                out.incidents.push(Incident {
                    stage,
                    doc_id: id.clone(),
                    kind: IncidentKind::ParseFailure,
                    detail: raw.chars().take(200).collect(),
                });
                out.raw.insert(id.clone(), raw);
                fallback(&id)
            }
            Outcome::Failed(e) => {
                failed += 1;
                out.incidents.push(Incident {
                    stage,
                    doc_id: id.clone(),
                    kind: IncidentKind::BackendFailure,
                    detail: e.to_string(),
                });
                fallback(&id)
            }
        };
        out.predictions.insert(id, records);
    }
    if total > 0 && failed as f64 / total as f64 > cfg.failure_ceiling {
        return Err(Error::SystemicFailure {
            stage: format!("{stage:?}"),
            failed,
            total,
        });
    }
    Ok(out)
}

/// Pseudo-label generation over `docs` with fixed gold-labelled `demos`.
/// Unusable answers become empty predictions.
pub fn stage1_annotate(
    gw: &Gateway,
    docs: &[Document],
    demos: &[Document],
    templates: &TemplateSet,
    choice: &TemplateChoice,
    cfg: RunnerConfig,
) -> Result<StageOutput> {
    let prompts = docs
        .iter()
        .map(|d| {
            let t = choice.resolve(templates, Stage::Stage1, d)?;
            let same_lang: Vec<Document> = demos.iter().filter(|x| x.lang == d.lang).cloned().collect();
            Ok(render_stage1(t, d, &same_lang)?)
        })
        .collect::<Result<Vec<String>>>()?;
    let jobs: Vec<(&str, &str)> = docs.iter().map(|d| d.id.as_str()).zip(prompts.iter().map(String::as_str)).collect();
    let outcomes = par_map(&jobs, cfg.workers, |(id, p)| ask(gw, Stage::Stage1, id, p));
    collect(Stage::Stage1, docs.iter().map(|d| d.id.clone()), outcomes, |_| Vec::new(), cfg)
}

/// Correction of `pseudo` over `docs`; `examples[i]` are the in-context
/// examples shown for `docs[i]`. Unusable answers keep the pseudo-labels.
pub fn stage2_correct(
    gw: &Gateway,
    docs: &[Document],
    pseudo: &PseudoLabelSet,
    examples: &[Vec<CorrectionExample>],
    templates: &TemplateSet,
    choice: &TemplateChoice,
    cfg: RunnerConfig,
) -> Result<StageOutput> {
    assert_eq!(docs.len(), examples.len(), "one example list per document");
    let prompts = docs
        .iter()
        .zip(examples)
        .map(|(d, ex)| {
            let t = choice.resolve(templates, Stage::Stage2, d)?;
            let p = pseudo
                .get(&d.id)
                .ok_or_else(|| silc_core::pipeline::PipelineError::MissingPseudo(d.id.clone()))?;
            Ok(render_stage2(t, d, &p.records, ex)?)
        })
        .collect::<Result<Vec<String>>>()?;
    let jobs: Vec<(&str, &str)> = docs.iter().map(|d| d.id.as_str()).zip(prompts.iter().map(String::as_str)).collect();
    let outcomes = par_map(&jobs, cfg.workers, |(id, p)| ask(gw, Stage::Stage2, id, p));
    let fallback = |id: &str| pseudo.get(id).map(|e| e.records.clone()).unwrap_or_default();
    collect(Stage::Stage2, docs.iter().map(|d| d.id.clone()), outcomes, fallback, cfg)
}
