//! Full experiment runs: split, stage 1, assessment, filtering, retriever
//! training, indexing, stage 2 and evaluation for each seed, with every
//! artifact and a manifest written under one output directory.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use silc_core::corpus::{split, Document, SplitSpec};
use silc_core::eval::{aggregate_runs, relaxed_f1, strict_prf, EvalReport, Predictions, RelaxedReport};
use silc_core::gateway::{CorrectionExample, PromptTemplate, Stage, TemplateSet};
use silc_core::math::fnv1a;
use silc_core::pipeline::{
    assess_correctness, build_correction_records, export_finetune_pairs, filter_training_set, ExamplePool, FilterConfig,
    PipelineError, PseudoLabelSet,
};
use silc_core::retriever::{
    build_index, contrastive_train, ExactIndex, HashEmbedding, LossTrace, ModelConfig, NswIndex, NswParams,
    RetrieverModel, SimilarityRules, TrainConfig, VectorIndex,
};

use crate::error::{Error, Result};
use crate::gateway::{AuditLog, Backend, ChatBackend, FlipLogEntry, Gateway, HttpConfig, MockBackend, MockPolicy, ReqwestTransport};
use crate::io::{load_jsonl, read_json, save_pseudo, sha256_file, write_json, write_jsonl};
use crate::runner::{stage1_annotate, stage2_correct, Incident, RunnerConfig, StageOutput, TemplateChoice};

fn default_in_flight() -> usize {
    4
}

/// A model endpoint as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    Mock {
        policy: MockPolicy,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        refusal: Option<String>,
        /// JSON object mapping prompt fingerprints to canned replies.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lookup: Option<PathBuf>,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
    Http {
        http: HttpConfig,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

impl BackendSpec {
    pub fn name(&self) -> String {
        match self {
            BackendSpec::Mock { policy, .. } => format!("mock:{}", serde_json::to_string(policy).unwrap_or_default()),
            BackendSpec::Http { http, .. } => format!("http:{}", http.model_name),
        }
    }

    fn max_in_flight(&self) -> usize {
        match self {
            BackendSpec::Mock { max_in_flight, .. } | BackendSpec::Http { max_in_flight, .. } => *max_in_flight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Config {
    pub backend: BackendSpec,
    #[serde(default)]
    pub template: TemplateChoice,
    #[serde(default = "default_demos")]
    pub demos: usize,
    /// Explicit demonstration ids from the train split; overrides `demos`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_ids: Option<Vec<String>>,
}

fn default_demos() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Examples retrieved per query by the graph retriever.
    #[default]
    Gnn,
    /// The same seeded examples for every query.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage2Config {
    pub backend: BackendSpec,
    #[serde(default)]
    pub template: TemplateChoice,
    #[serde(default)]
    pub mode: CorrectionMode,
    #[serde(default = "default_demos")]
    pub fixed_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    #[default]
    Exact,
    Nsw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieverConfig {
    /// Threshold preset name; explicit thetas override it.
    pub preset: Option<String>,
    pub theta_lig: Option<f64>,
    pub theta_sen: Option<f64>,
    #[serde(alias = "lr")]
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(alias = "tau")]
    pub temperature: f64,
    pub weight_decay: f64,
    pub batch_pairs: usize,
    pub max_pairs: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub window: usize,
    pub index: IndexKind,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        Self {
            preset: None,
            theta_lig: None,
            theta_sen: None,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            temperature: t.temperature,
            weight_decay: t.weight_decay,
            batch_pairs: t.batch_pairs,
            max_pairs: t.max_pairs,
            seed: 0,
            embed_dim: m.embed_dim,
            heads: m.heads,
            head_dim: m.head_dim,
            window: m.window,
            index: IndexKind::Exact,
        }
    }
}

impl RetrieverConfig {
    pub fn rules(&self) -> Result<SimilarityRules> {
        let base = match &self.preset {
            Some(p) => SimilarityRules::preset(p).ok_or_else(|| Error::Config(format!("unknown threshold preset {p:?}")))?,
            None => SimilarityRules::FINENTITY,
        };
        Ok(SimilarityRules {
            theta_lig: self.theta_lig.unwrap_or(base.theta_lig),
            theta_sen: self.theta_sen.unwrap_or(base.theta_sen),
        })
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            heads: self.heads,
            head_dim: self.head_dim,
            window: self.window,
            seed,
            ..ModelConfig::default()
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_pairs: self.batch_pairs,
            temperature: self.temperature,
            weight_decay: self.weight_decay,
            max_pairs: self.max_pairs,
            clip_norm: None,
            seed,
        }
    }

    pub fn embedding(&self, seed: u64) -> HashEmbedding {
        HashEmbedding::new(self.embed_dim, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Document JSONL; relative paths resolve against the config file.
    pub dataset: PathBuf,
    #[serde(default)]
    pub split: SplitConfig,
    pub stage1: Stage1Config,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub retriever: RetrieverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<Stage2Config>,
    #[serde(default)]
    pub skip_stage2: bool,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub runner: RunnerConfig,
    /// Extra prompt templates (JSON list), added to the built-in set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    /// Reads a config and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        if let Some(t) = &mut self.templates {
            fix(t);
        }
        let mut backends = vec![&mut self.stage1.backend];
        if let Some(s2) = &mut self.stage2 {
            backends.push(&mut s2.backend);
        }
        for b in backends {
            if let BackendSpec::Mock { lookup: Some(l), .. } = b {
                fix(l);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !self.skip_stage2 && self.stage2.is_none() {
            return Err(Error::Config("stage2 section is required unless skip_stage2 is set".into()));
        }
        if !(0.0..=1.0).contains(&self.filter.keep_ratio) {
            return Err(Error::Config(format!("filter.keep_ratio {} outside [0, 1]", self.filter.keep_ratio)));
        }
        for b in std::iter::once(&self.stage1.backend).chain(self.stage2.iter().map(|s| &s.backend)) {
            if b.max_in_flight() == 0 {
                return Err(Error::Config("max_in_flight must be at least 1".into()));
            }
        }
        self.retriever.rules()?;
        Ok(())
    }

    pub fn template_set(&self) -> Result<TemplateSet> {
        let mut set = TemplateSet::builtin();
        if let Some(p) = &self.templates {
            let extra: Vec<PromptTemplate> = read_json(p)?;
            for t in extra {
                t.check()?;
                set.insert(t);
            }
        }
        Ok(set)
    }
}

/// Seed for one pipeline component, derived from the run seed.
pub fn derive_seed(run_seed: u64, component: &str, base: u64) -> u64 {
    let mut bytes = Vec::with_capacity(16 + component.len());
    bytes.extend_from_slice(&run_seed.to_le_bytes());
    bytes.extend_from_slice(component.as_bytes());
    bytes.extend_from_slice(&base.to_le_bytes());
    fnv1a(&bytes)
}

fn seeded_policy(policy: MockPolicy, run_seed: u64, role: &str) -> MockPolicy {
    match policy {
        MockPolicy::Perturb { error_rate, seed } => MockPolicy::Perturb {
            error_rate,
            seed: derive_seed(run_seed, role, seed),
        },
        MockPolicy::FixPlanted { fraction, seed } => MockPolicy::FixPlanted {
            fraction,
            seed: derive_seed(run_seed, role, seed),
        },
        p => p,
    }
}

fn seeded_choice(choice: &TemplateChoice, run_seed: u64) -> TemplateChoice {
    match choice {
        TemplateChoice::Random { random_seed } => TemplateChoice::Random {
            random_seed: derive_seed(run_seed, "template", *random_seed),
        },
        c => c.clone(),
    }
}

/// Builds a backend from its spec. Mocks get the full dataset as their
/// answer key and, for correction policies, the stage-1 labels.
pub fn build_backend(
    spec: &BackendSpec,
    role: &str,
    run_seed: u64,
    answer_key: &[Document],
    pseudo: Option<&Predictions>,
) -> Result<(Arc<dyn Backend>, Vec<FlipLogEntry>)> {
    match spec {
        BackendSpec::Mock { policy, refusal, lookup, .. } => {
            let mut m = MockBackend::new(role, seeded_policy(*policy, run_seed, role)).with_answer_key(answer_key);
            if let Some(text) = refusal {
                m = m.with_refusal(text.clone());
            }
            if let Some(p) = lookup {
                m = m.with_lookup(read_json(p)?);
            }
            if let Some(p) = pseudo {
                m = m.with_pseudo(p.clone());
            }
            let flips = m.flip_log().to_vec();
            Ok((Arc::new(m), flips))
        }
        BackendSpec::Http { http, .. } => {
            let transport = Arc::new(ReqwestTransport::new()?);
            Ok((Arc::new(ChatBackend::new(role, http.clone(), transport)), Vec::new()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub strict: EvalReport,
    pub relaxed: RelaxedReport,
}

impl StageMetrics {
    pub fn of(gold: &[Document], pred: &Predictions) -> Result<Self> {
        Ok(Self {
            strict: strict_prf(gold, pred)?,
            relaxed: relaxed_f1(gold, pred)?,
        })
    }

    pub fn mean(items: &[&StageMetrics]) -> Result<Self> {
        let strict: Vec<EvalReport> = items.iter().map(|m| m.strict.clone()).collect();
        let n = items.len() as f64;
        let avg = |f: &dyn Fn(&RelaxedReport) -> f64| items.iter().map(|m| f(&m.relaxed)).sum::<f64>() / n;
        let prf = |f: &dyn Fn(&RelaxedReport) -> silc_core::eval::Prf| silc_core::eval::Prf {
            precision: avg(&|r| f(r).precision),
            recall: avg(&|r| f(r).recall),
            f1: avg(&|r| f(r).f1),
        };
        Ok(Self {
            strict: aggregate_runs(&strict)?,
            relaxed: RelaxedReport {
                entity: prf(&|r| r.entity),
                sentiment: prf(&|r| r.sentiment),
                entity_f1: avg(&|r| r.entity_f1),
                sentiment_f1: avg(&|r| r.sentiment_f1),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrieverSummary {
    pub model_version: String,
    pub losses: Vec<f64>,
    pub steps: u64,
    pub indexed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub demo_ids: Vec<String>,
    pub filter: FilterSummary,
    pub stage1: StageMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retriever: Option<RetrieverSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<StageMetrics>,
    pub incidents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub seeds: Vec<u64>,
    pub stage1: StageMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<StageMetrics>,
}

impl MeanReport {
    pub fn of(reports: &[SeedReport]) -> Result<Self> {
        let s1: Vec<&StageMetrics> = reports.iter().map(|r| &r.stage1).collect();
        let s2: Vec<&StageMetrics> = reports.iter().filter_map(|r| r.stage2.as_ref()).collect();
        Ok(Self {
            seeds: reports.iter().map(|r| r.seed).collect(),
            stage1: StageMetrics::mean(&s1)?,
            stage2: if s2.len() == reports.len() && !s2.is_empty() {
                Some(StageMetrics::mean(&s2)?)
            } else {
                None
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub seed: u64,
    pub dir: String,
    /// Artifact name to path relative to the run directory.
    pub files: BTreeMap<String, String>,
    pub report: SeedReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub dataset_sha256: String,
    pub templates: TemplateSet,
    pub backends: BTreeMap<String, String>,
    pub runs: Vec<SeedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MeanReport>,
}

pub const MANIFEST: &str = "manifest.json";

/// Self-describing retriever checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: String,
    pub model: RetrieverModel,
    pub embedding: HashEmbedding,
}

impl Checkpoint {
    pub const FORMAT: &'static str = "silc-retriever-v1";

    pub fn new(model: RetrieverModel, embedding: HashEmbedding) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: model.version(),
            model,
            embedding,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = read_json(path)?;
        if c.format != Self::FORMAT {
            return Err(Error::format(path, format!("unsupported checkpoint format {:?}", c.format)));
        }
        c.model.check()?;
        if c.model.version() != c.version {
            return Err(Error::format(path, "checkpoint version tag does not match its parameters"));
        }
        Ok(c)
    }
}

/// An index together with the checkpoint that encoded it and the indexed
/// documents, so it can be queried on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexBundle {
    pub checkpoint: Checkpoint,
    pub index: ExactIndex,
    pub documents: Vec<Document>,
}

impl IndexBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let b: IndexBundle = read_json(path)?;
        if b.index.model_version != b.checkpoint.version {
            return Err(Error::format(path, "index and checkpoint versions differ"));
        }
        Ok(b)
    }
}

/// Trained retrievers keyed by training inputs, shared across sweep points.
#[derive(Default)]
pub struct RetrieverCache {
    inner: Mutex<HashMap<u64, (RetrieverModel, LossTrace, u64)>>,
}

#[derive(Debug, Clone, Serialize)]
struct RawLine<'a> {
    doc_id: &'a str,
    text: &'a str,
}

fn pseudo_set(run_id: &str, out: &StageOutput, raw_file: &str) -> PseudoLabelSet {
    let mut set = PseudoLabelSet::new(run_id);
    for (id, recs) in &out.predictions {
        set.insert(id.clone(), recs.clone());
        if out.raw.contains_key(id) {
            if let Some(e) = set.entries.get_mut(id) {
                e.raw_ref = Some(format!("{raw_file}#{id}"));
            }
        }
    }
    set
}

fn raw_lines(outs: &[&StageOutput]) -> Vec<(String, String)> {
    outs.iter().flat_map(|o| o.raw.iter().map(|(k, v)| (k.clone(), v.clone()))).collect()
}

fn pick_demos(train: &[Document], cfg: &Stage1Config, seed: u64) -> Result<Vec<Document>> {
    if let Some(ids) = &cfg.demo_ids {
        return ids
            .iter()
            .map(|id| {
                train
                    .iter()
                    .find(|d| &d.id == id)
                    .cloned()
                    .ok_or_else(|| PipelineError::UnknownDocId(id.clone()).into())
            })
            .collect();
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.sort_by(|&a, &b| train[a].id.cmp(&train[b].id));
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(cfg.demos);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| train[i].clone()).collect())
}

struct Writer<'a> {
    root: &'a Path,
    dir: String,
    files: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let rel = format!("{}/{name}", self.dir);
        self.files.insert(name.to_string(), rel.clone());
        self.root.join(rel)
    }
}

/// Runs one seed end to end; artifacts go to `root/seed_<seed>/`.
#[allow(clippy::too_many_arguments)]
fn run_seed(
    cfg: &ExperimentConfig,
    templates: &TemplateSet,
    dataset: &[Document],
    train: &[Document],
    test: &[Document],
    seed: u64,
    run_id: &str,
    root: &Path,
    cache: Option<&RetrieverCache>,
) -> Result<SeedEntry> {
    let mut w = Writer {
        root,
        dir: format!("seed_{seed}"),
        files: BTreeMap::new(),
    };
    std::fs::create_dir_all(root.join(&w.dir)).map_err(|e| Error::io(root.join(&w.dir), e))?;
    let runner = cfg.runner;
    let audit = Arc::new(AuditLog::to_file(&w.path("audit.jsonl")).map_err(|e| Error::io(root.join(&w.dir), e))?);

    // Stage 1 on both splits.
    let demos = pick_demos(train, &cfg.stage1, derive_seed(seed, "demos", 0))?;
    let (b1, flips) = build_backend(&cfg.stage1.backend, "stage1", seed, dataset, None)?;
    let gw1 = Gateway::new(b1, cfg.stage1.backend.max_in_flight()).with_audit(audit.clone());
    let choice1 = seeded_choice(&cfg.stage1.template, seed);
    log::info!("seed {seed}: stage 1 over {} train and {} test documents", train.len(), test.len());
    let out_train = stage1_annotate(&gw1, train, &demos, templates, &choice1, runner)?;
    let out_test = stage1_annotate(&gw1, test, &demos, templates, &choice1, runner)?;
    let mut incidents: Vec<Incident> = out_train.incidents.iter().chain(&out_test.incidents).cloned().collect();
    let raw1_owned = raw_lines(&[&out_train, &out_test]);
    let raw1: Vec<RawLine> = raw1_owned.iter().map(|(id, text)| RawLine { doc_id: id, text }).collect();
    write_jsonl(&w.path("stage1_raw.jsonl"), &raw1)?;
    if !flips.is_empty() {
        write_jsonl(&w.path("flip_log.jsonl"), &flips)?;
    }

    let pseudo_train = assess_correctness(pseudo_set(run_id, &out_train, "stage1_raw.jsonl"), train)?;
    let pseudo_test = assess_correctness(pseudo_set(run_id, &out_test, "stage1_raw.jsonl"), test)?;
    save_pseudo(&w.path("stage1_train.jsonl"), &pseudo_train)?;
    save_pseudo(&w.path("stage1_test.jsonl"), &pseudo_test)?;
    let stage1 = StageMetrics::of(test, &pseudo_test.predictions())?;

    let filter_cfg = FilterConfig {
        keep_ratio: cfg.filter.keep_ratio,
        seed: derive_seed(seed, "filter", cfg.filter.seed),
    };
    let filtered_ids = filter_training_set(&pseudo_train, filter_cfg)?;
    let (correct, incorrect) = pseudo_train.partition()?;
    write_json(&w.path("filtered_ids.json"), &filtered_ids)?;
    let filter = FilterSummary {
        n_correct: correct.len(),
        n_incorrect: incorrect.len(),
        kept: filtered_ids.len(),
    };

    let mut retriever = None;
    let mut stage2 = None;
    if !cfg.skip_stage2 {
        let s2 = cfg.stage2.as_ref().expect("validated");
        let rseed = derive_seed(seed, "retriever", cfg.retriever.seed);
        let provider = cfg.retriever.embedding(rseed);
        let (model, trace, steps) = train_retriever(cfg, train, rseed, &provider, cache)?;
        write_json(&w.path("retriever.json"), &Checkpoint::new(model.clone(), provider))?;
        write_json(&w.path("retriever_trace.json"), &trace)?;

        let filtered: Vec<Document> = train.iter().filter(|d| filtered_ids.binary_search(&d.id).is_ok()).cloned().collect();
        let exact = build_index(&model, &filtered, &provider)?;
        let bundle = IndexBundle {
            checkpoint: Checkpoint::new(model.clone(), provider),
            index: exact,
            documents: filtered.clone(),
        };
        write_json(&w.path("index.json"), &bundle)?;
        let exact = bundle.index;
        let index: Box<dyn VectorIndex> = match cfg.retriever.index {
            IndexKind::Exact => Box::new(exact.clone()),
            IndexKind::Nsw => Box::new(NswIndex::build(exact.clone(), NswParams::default())),
        };
        retriever = Some(RetrieverSummary {
            model_version: model.version(),
            losses: trace.losses.clone(),
            steps,
            indexed: exact.examples.len(),
        });

        let records = build_correction_records(&filtered, &pseudo_train, index.as_ref(), &model, &provider)?;
        write_jsonl(&w.path("correction_records.jsonl"), &records)?;
        let choice2 = seeded_choice(&s2.template, seed);
        let mut pairs = Vec::with_capacity(records.len());
        for r in &records {
            let doc = Document::new(r.doc_id.clone(), r.text.clone(), r.lang);
            let t = match &choice2 {
                TemplateChoice::Id(id) => templates.get(id)?,
                TemplateChoice::Random { random_seed } => templates.pick(Stage::Stage2, r.lang, *random_seed, &doc.id)?,
            };
            pairs.extend(export_finetune_pairs(std::slice::from_ref(r), t)?);
        }
        write_jsonl(&w.path("finetune.jsonl"), &pairs)?;

        let pool = ExamplePool::new(&filtered, &pseudo_train);
        let examples: Vec<Vec<CorrectionExample>> = match s2.mode {
            CorrectionMode::Gnn => test
                .iter()
                .map(|d| pool.retrieved(index.as_ref(), &model, d, &provider))
                .collect::<Result<_, _>>()?,
            CorrectionMode::Fixed => {
                let fixed = pool.fixed(s2.fixed_k, derive_seed(seed, "fixed", 0))?;
                vec![fixed; test.len()]
            }
        };
        let (b2, _) = build_backend(&s2.backend, "stage2", seed, dataset, Some(&pseudo_test.predictions()))?;
        let gw2 = Gateway::new(b2, s2.backend.max_in_flight()).with_audit(audit.clone());
        log::info!("seed {seed}: stage 2 over {} test documents ({:?} examples)", test.len(), s2.mode);
        let out2 = stage2_correct(&gw2, test, &pseudo_test, &examples, templates, &choice2, runner)?;
        incidents.extend(out2.incidents.iter().cloned());
        let raw2: Vec<RawLine> = out2.raw.iter().map(|(id, text)| RawLine { doc_id: id, text }).collect();
        write_jsonl(&w.path("stage2_raw.jsonl"), &raw2)?;
        let corrected = pseudo_set(run_id, &out2, "stage2_raw.jsonl");
        save_pseudo(&w.path("stage2_test.jsonl"), &assess_correctness(corrected, test)?)?;
        stage2 = Some(StageMetrics::of(test, &out2.predictions)?);
    }
    write_jsonl(&w.path("incidents.jsonl"), &incidents)?;

    let report = SeedReport {
        seed,
        n_train: train.len(),
        n_test: test.len(),
        demo_ids: demos.iter().map(|d| d.id.clone()).collect(),
        filter,
        stage1,
        retriever,
        stage2,
        incidents: incidents.len(),
    };
    write_json(&w.path("report.json"), &report)?;
    Ok(SeedEntry {
        seed,
        dir: w.dir,
        files: w.files,
        report,
    })
}

fn train_retriever(
    cfg: &ExperimentConfig,
    train: &[Document],
    seed: u64,
    provider: &HashEmbedding,
    cache: Option<&RetrieverCache>,
) -> Result<(RetrieverModel, LossTrace, u64)> {
    let key = {
        let ids: Vec<&str> = train.iter().map(|d| d.id.as_str()).collect();
        let blob = serde_json::to_vec(&(&cfg.retriever, seed, ids)).expect("serializable");
        fnv1a(&blob)
    };
    if let Some(c) = cache {
        if let Some(hit) = c.inner.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
    }
    let model = RetrieverModel::new(cfg.retriever.model_config(seed));
    log::info!("training retriever on {} documents ({} parameters)", train.len(), model.n_params());
    let out = contrastive_train(model, train, provider, cfg.retriever.rules()?, &cfg.retriever.train_config(seed))?;
    let value = (out.model, out.trace, out.steps);
    if let Some(c) = cache {
        c.inner.lock().expect("cache lock").insert(key, value.clone());
    }
    Ok(value)
}

/// Deterministic id from the config snapshot and dataset hash.
pub fn run_id(cfg: &ExperimentConfig, dataset_sha256: &str) -> String {
    let blob = serde_json::to_vec(&(cfg, dataset_sha256)).expect("serializable");
    format!("run-{:016x}", fnv1a(&blob))
}

/// Executes every seed of `cfg` into `out`. On a stage failure the manifest
/// is still written, marked failed, with the seeds that completed.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, cache: Option<&RetrieverCache>) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let dataset = load_jsonl(&cfg.dataset)?;
    let dataset_sha256 = sha256_file(&cfg.dataset)?;
    let templates = cfg.template_set()?;
    let (train, test) = split(&dataset, SplitSpec::new(cfg.split.test_fraction, cfg.split.seed))?;
    let mut backends = BTreeMap::new();
    backends.insert("stage1".to_string(), cfg.stage1.backend.name());
    if let (false, Some(s2)) = (cfg.skip_stage2, &cfg.stage2) {
        backends.insert("stage2".to_string(), s2.backend.name());
    }
    let mut manifest = RunManifest {
        run_id: run_id(cfg, &dataset_sha256),
        status: RunStatus::Running,
        error: None,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        dataset_sha256,
        templates: templates.clone(),
        backends,
        runs: Vec::new(),
        mean: None,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    for &seed in &cfg.seeds {
        match run_seed(cfg, &templates, &dataset, &train, &test, seed, &manifest.run_id, out, cache) {
            Ok(entry) => {
                manifest.runs.push(entry);
                write_json(&out.join(MANIFEST), &manifest)?;
            }
            Err(e) => {
                manifest.status = RunStatus::Failed;
                manifest.error = Some(format!("seed {seed}: {e}"));
                write_json(&out.join(MANIFEST), &manifest)?;
                return Err(e);
            }
        }
    }
    let reports: Vec<SeedReport> = manifest.runs.iter().map(|r| r.report.clone()).collect();
    let mean = MeanReport::of(&reports)?;
    write_json(&out.join("report_mean.json"), &mean)?;
    manifest.mean = Some(mean);
    manifest.status = RunStatus::Complete;
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Re-executes the configuration recorded in a manifest after checking the
/// dataset is unchanged.
pub fn rerun_from_manifest(manifest_path: &Path, out: &Path) -> Result<RunManifest> {
    let old: RunManifest = read_json(manifest_path)?;
    let sha = sha256_file(&old.config.dataset)?;
    if sha != old.dataset_sha256 {
        return Err(Error::Config(format!(
            "dataset {} changed since the recorded run (sha256 {sha} vs {})",
            old.config.dataset.display(),
            old.dataset_sha256
        )));
    }
    let mut cfg = old.config.clone();
    if cfg.templates.is_none() && old.templates != TemplateSet::builtin() {
        let path = out.join("templates.json");
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_json(&path, &old.templates.iter().cloned().collect::<Vec<_>>())?;
        cfg.templates = Some(path);
    }
    run_experiment(&cfg, out, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Share of correctly pseudo-labelled samples kept by the filter.
    KeepRatio,
    /// Number of stage-1 demonstrations.
    Demos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub dir: String,
    pub stage1_micro_f1: f64,
    pub stage1_macro_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_micro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_macro_f1: Option<f64>,
    pub mean: MeanReport,
}

/// One full run per grid value, each under `out/<param>_<value>/`, plus
/// `out/sweep.json`. Retrievers are trained once and reused across values.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64], out: &Path) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let cache = RetrieverCache::default();
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        let dir = match param {
            SweepParam::KeepRatio => {
                c.filter.keep_ratio = v;
                format!("keep_ratio_{v}")
            }
            SweepParam::Demos => {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Error::Config(format!("demo count must be a whole number, got {v}")));
                }
                c.stage1.demos = v as usize;
                c.stage1.demo_ids = None;
                format!("demos_{v}")
            }
        };
        log::info!("sweep {param:?} = {v}");
        let m = run_experiment(&c, &out.join(&dir), Some(&cache))?;
        let mean = m.mean.expect("complete run has a mean");
        rows.push(SweepRow {
            param,
            value: v,
            dir,
            stage1_micro_f1: mean.stage1.strict.micro.f1,
            stage1_macro_f1: mean.stage1.strict.macro_f1,
            stage2_micro_f1: mean.stage2.as_ref().map(|s| s.strict.micro.f1),
            stage2_macro_f1: mean.stage2.as_ref().map(|s| s.strict.macro_f1),
            mean,
        });
    }
    write_json(&out.join("sweep.json"), &rows)?;
    Ok(rows)
}

/// Reads back the per-seed reports recorded in a run directory.
pub fn load_reports(run_dir: &Path) -> Result<Vec<SeedReport>> {
    let m: RunManifest = read_json(&run_dir.join(MANIFEST))?;
    m.runs
        .iter()
        .map(|r| read_json(&run_dir.join(&r.files["report.json"])))
        .collect()
}
