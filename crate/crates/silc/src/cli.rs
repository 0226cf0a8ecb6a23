//! The `silc` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use silc_core::corpus::{compute_stats, split, Document, SplitSpec};
use silc_core::eval::{relaxed_f1, strict_prf, Predictions};
use silc_core::gateway::{CorrectionExample, TemplateSet};
use silc_core::pipeline::{assess_correctness, filter_training_set, ExamplePool, FilterConfig};
use silc_core::retriever::{build_index, contrastive_train, retrieve, RetrieverModel};

use crate::error::{Error, Result};
use crate::experiment::{
    build_backend, derive_seed, rerun_from_manifest, run_experiment, sweep, BackendSpec, Checkpoint, CorrectionMode,
    ExperimentConfig, IndexBundle, RetrieverConfig, SweepParam,
};
use crate::forecast_io::{load_articles, load_prices, run_forecast, save_prices, FeatureChoice, ForecastOptions};
use crate::gateway::Gateway;
use crate::io::{load_jsonl, load_pseudo, read_json, read_jsonl, save_jsonl, save_pseudo, write_json, PredictionLine};
use crate::restructure::{restructure, Occurrences, SourceFormat};
use crate::runner::{stage1_annotate, stage2_correct, RunnerConfig, TemplateChoice};

#[derive(Debug, Parser)]
#[command(name = "silc", version, about = "Two-stage entity-level sentiment labelling with retrieval-guided correction")]
struct Cli {
    /// Log level for the JSON-lines log on stderr.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// Shared settings file: backend registry, template file, default seed.
    #[arg(long, global = true)]
    settings: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dataset conversion, statistics, splitting and synthetic data.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Generate pseudo-labels with the stage-1 model.
    Stage1(Stage1Args),
    /// Keep every wrong pseudo-label and a share of the right ones.
    Filter(FilterArgs),
    /// Train or query the example retriever.
    #[command(subcommand)]
    Retriever(RetrieverCmd),
    /// Correct pseudo-labels with the stage-2 model.
    Stage2(Stage2Args),
    /// Score predictions against gold labels.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Train and score the next-day close forecaster.
    Forecast(ForecastArgs),
    /// Run a full experiment from a config, or re-run one from its manifest.
    Run(RunArgs),
    /// Run an experiment once per grid value.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
enum CorpusCmd {
    /// Convert a public source dataset into document JSONL.
    Restructure {
        #[arg(long, value_enum)]
        format: SourceFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        occurrences: Occurrences,
    },
    /// Dataset statistics as JSON.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Seeded train/test split into `train.jsonl` and `test.jsonl`.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a clustered synthetic corpus.
    Synth {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic price series driven by article sentiment.
    SynthMarket {
        #[arg(long, default_value_t = 300)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        articles: PathBuf,
    },
}

#[derive(Debug, Args)]
struct BackendArg {
    /// Registry name, path to a backend JSON file, or inline JSON.
    #[arg(long)]
    backend: String,
    /// Worker threads for model calls (defaults to the backend bound).
    #[arg(long)]
    workers: Option<usize>,
    /// Template id; a seeded random variant when omitted.
    #[arg(long)]
    template: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct Stage1Args {
    #[command(flatten)]
    backend: BackendArg,
    /// Documents to label.
    #[arg(long)]
    data: PathBuf,
    /// Gold-labelled documents to draw demonstrations from.
    #[arg(long)]
    demos_from: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    demos: usize,
    /// Comma-separated demonstration ids (overrides --demos).
    #[arg(long, value_delimiter = ',')]
    demo_ids: Vec<String>,
    /// Also record per-document correctness against the gold in --data.
    #[arg(long)]
    assess: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Pseudo-labels of the training split.
    #[arg(long)]
    pseudo: PathBuf,
    /// Gold documents; needed when the pseudo file has no correctness flags.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    keep_ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum RetrieverCmd {
    /// Contrastive training; writes a checkpoint and optionally an index.
    Train(RetrieverTrainArgs),
    /// Nearest stored example per channel for one document.
    Query {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        doc_id: String,
        /// Where to find the query document when it is not in the index.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RetrieverTrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    theta_lig: Option<f64>,
    #[arg(long)]
    theta_sen: Option<f64>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 8)]
    batch_pairs: usize,
    #[arg(long, default_value_t = 2000)]
    max_pairs: usize,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also index these documents (ids file from `filter`, or all of --data).
    #[arg(long)]
    index_out: Option<PathBuf>,
    #[arg(long)]
    index_ids: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Gnn,
    #[value(name = "fixed-examples", alias = "fixed")]
    FixedExamples,
}

#[derive(Debug, Args)]
struct Stage2Args {
    #[command(flatten)]
    backend: BackendArg,
    /// Documents to correct (gold labels are used only by mock backends).
    #[arg(long)]
    data: PathBuf,
    /// Stage-1 labels of --data.
    #[arg(long)]
    pseudo: PathBuf,
    /// Index bundle over the filtered training set.
    #[arg(long)]
    index: PathBuf,
    /// Stage-1 labels of the training split, with correctness flags.
    #[arg(long)]
    train_pseudo: PathBuf,
    #[arg(long, value_enum, default_value = "gnn")]
    mode: ModeArg,
    #[arg(long, default_value_t = 3)]
    fixed_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    /// Exact (value, start, end, tag) tuple matching.
    Strict(EvalArgs),
    /// Offset-insensitive entity and sentiment scores.
    Relaxed(EvalArgs),
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Prediction JSONL (`{id, predictions}` lines).
    #[arg(long)]
    pred: PathBuf,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[arg(long)]
    articles: Option<PathBuf>,
    #[arg(long)]
    prices: PathBuf,
    #[arg(long, value_enum)]
    features: FeatureChoice,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 128)]
    hidden: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-execute the run recorded in this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    skip_stage2: bool,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Shared settings loaded with `--settings`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
    /// Extra prompt templates (JSON list).
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub log_level: Option<String>,
    /// Base directory for relative data paths on the command line.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
}

impl GlobalConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut g: GlobalConfig = serde_json::from_str(&text).map_err(|e| Error::SchemaViolation {
            path: path.into(),
            line: e.line(),
            message: format!("column {}: {e}", e.column()),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut g.templates, &mut g.data_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(l) = &g.log_level {
            l.parse::<log::LevelFilter>()
                .map_err(|_| Error::Config(format!("{}: unknown log level {l:?}", path.display())))?;
        }
        Ok(g)
    }

    fn data(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() && !p.exists() => d.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn templates(&self) -> Result<TemplateSet> {
        let mut set = TemplateSet::builtin();
        if let Some(p) = &self.templates {
            let extra: Vec<silc_core::gateway::PromptTemplate> = read_json(p)?;
            for t in extra {
                t.check()?;
                set.insert(t);
            }
        }
        Ok(set)
    }

    fn backend(&self, arg: &str) -> Result<BackendSpec> {
        if let Some(b) = self.backends.get(arg) {
            return Ok(b.clone());
        }
        let p = Path::new(arg);
        if p.exists() {
            return read_json(p);
        }
        serde_json::from_str(arg)
            .map_err(|e| Error::Config(format!("--backend {arg:?} is not a registry name, a file, or backend JSON: {e}")))
    }
}

/// Parses `argv` (program name first) and runs the command. Returns 0 on
/// success, 1 on a domain error and 2 on a usage error.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let settings = match cli.settings.as_deref().map(GlobalConfig::load).transpose() {
        Ok(s) => s.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let level = settings
        .log_level
        .as_deref()
        .and_then(|l| l.parse().ok())
        .filter(|_| cli.log_level == log::LevelFilter::Info)
        .unwrap_or(cli.log_level);
    crate::logging::init(level);
    match execute(cli.command, &settings) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn choice(template: &Option<String>, seed: u64) -> TemplateChoice {
    match template {
        Some(id) => TemplateChoice::Id(id.clone()),
        None => TemplateChoice::Random { random_seed: seed },
    }
}

fn load_predictions(path: &Path) -> Result<Predictions> {
    let lines: Vec<PredictionLine> = read_jsonl(path)?;
    Ok(lines.into_iter().map(|l| (l.id, l.predictions)).collect())
}

fn gateway_for(spec: &BackendSpec, role: &str, seed: u64, key: &[Document], pseudo: Option<&Predictions>) -> Result<Gateway> {
    let (backend, _) = build_backend(spec, role, seed, key, pseudo)?;
    let bound = match spec {
        BackendSpec::Mock { max_in_flight, .. } | BackendSpec::Http { max_in_flight, .. } => *max_in_flight,
    };
    Ok(Gateway::new(backend, bound))
}

fn runner_cfg(workers: Option<usize>, spec: &BackendSpec) -> RunnerConfig {
    let bound = match spec {
        BackendSpec::Mock { max_in_flight, .. } | BackendSpec::Http { max_in_flight, .. } => *max_in_flight,
    };
    RunnerConfig {
        workers: workers.unwrap_or(bound),
        ..RunnerConfig::default()
    }
}

fn execute(cmd: Command, g: &GlobalConfig) -> Result<()> {
    let default_seed = g.seed.unwrap_or(0);
    match cmd {
        Command::Corpus(c) => corpus(c, g),
        Command::Stage1(a) => {
            let seed = a.backend.seed.unwrap_or(default_seed);
            let docs = load_jsonl(&g.data(&a.data))?;
            let pool = match &a.demos_from {
                Some(p) => load_jsonl(&g.data(p))?,
                None => Vec::new(),
            };
            let demos: Vec<Document> = if !a.demo_ids.is_empty() {
                a.demo_ids
                    .iter()
                    .map(|id| {
                        pool.iter()
                            .find(|d| &d.id == id)
                            .cloned()
                            .ok_or_else(|| Error::Config(format!("demo id {id:?} not found in --demos-from")))
                    })
                    .collect::<Result<_>>()?
            } else {
                let mut p = pool.clone();
                p.sort_by(|x, y| x.id.cmp(&y.id));
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, "demos", 0)));
                p.truncate(a.demos);
                p
            };
            let spec = g.backend(&a.backend.backend)?;
            let key: Vec<Document> = docs.iter().chain(&pool).cloned().collect();
            let gw = gateway_for(&spec, "stage1", seed, &key, None)?;
            let out = stage1_annotate(&gw, &docs, &demos, &g.templates()?, &choice(&a.backend.template, seed), runner_cfg(a.backend.workers, &spec))?;
            for i in &out.incidents {
                log::warn!("incident {:?} on {}: {}", i.kind, i.doc_id, i.detail);
            }
            let mut set = silc_core::pipeline::PseudoLabelSet::new(format!("stage1-{seed}"));
            for (id, r) in &out.predictions {
                set.insert(id.clone(), r.clone());
            }
            if a.assess {
                set = assess_correctness(set, &docs)?;
            }
            save_pseudo(&a.out, &set)
        }
        Command::Filter(a) => {
            let mut pseudo = load_pseudo(&a.pseudo)?;
            if let Some(gp) = &a.gold {
                pseudo = assess_correctness(pseudo, &load_jsonl(&g.data(gp))?)?;
            }
            let ids = filter_training_set(
                &pseudo,
                FilterConfig {
                    keep_ratio: a.keep_ratio,
                    seed: a.seed,
                },
            )?;
            log::info!("kept {} of {} training samples", ids.len(), pseudo.len());
            write_json(&a.out, &ids)
        }
        Command::Retriever(RetrieverCmd::Train(a)) => {
            let docs = load_jsonl(&g.data(&a.data))?;
            let rc = RetrieverConfig {
                preset: a.preset.clone(),
                theta_lig: a.theta_lig,
                theta_sen: a.theta_sen,
                learning_rate: a.lr,
                epochs: a.epochs,
                temperature: a.tau,
                batch_pairs: a.batch_pairs,
                max_pairs: a.max_pairs,
                seed: a.seed,
                embed_dim: a.embed_dim,
                ..RetrieverConfig::default()
            };
            let provider = rc.embedding(a.seed);
            let model = RetrieverModel::new(rc.model_config(a.seed));
            let out = contrastive_train(model, &docs, &provider, rc.rules()?, &rc.train_config(a.seed))?;
            let ckpt = Checkpoint::new(out.model.clone(), provider);
            write_json(&a.out, &ckpt)?;
            if let Some(ip) = &a.index_out {
                let members: Vec<Document> = match &a.index_ids {
                    Some(p) => {
                        let ids: Vec<String> = read_json(p)?;
                        docs.iter().filter(|d| ids.contains(&d.id)).cloned().collect()
                    }
                    None => docs.clone(),
                };
                let index = build_index(&out.model, &members, &provider)?;
                write_json(
                    ip,
                    &IndexBundle {
                        checkpoint: ckpt.clone(),
                        index,
                        documents: members,
                    },
                )?;
            }
            print_json(&serde_json::json!({
                "model_version": ckpt.version,
                "losses": out.trace.losses,
                "steps": out.steps,
                "linguistic_pairs": out.pairs.linguistic.positives.len(),
                "sentiment_pairs": out.pairs.sentiment.positives.len(),
            }))
        }
        Command::Retriever(RetrieverCmd::Query { index, doc_id, data }) => {
            let b = IndexBundle::load(&index)?;
            let doc = match b.documents.iter().find(|d| d.id == doc_id) {
                Some(d) => d.clone(),
                None => {
                    let p = data.ok_or_else(|| Error::Config(format!("{doc_id:?} is not in the index; pass --data")))?;
                    load_jsonl(&g.data(&p))?
                        .into_iter()
                        .find(|d| d.id == doc_id)
                        .ok_or_else(|| silc_core::pipeline::PipelineError::UnknownDocId(doc_id.clone()))?
                }
            };
            let hits = retrieve(&b.index, &b.checkpoint.model, &doc, &b.checkpoint.embedding)?;
            print_json(&hits)
        }
        Command::Stage2(a) => {
            let seed = a.backend.seed.unwrap_or(default_seed);
            let docs = load_jsonl(&g.data(&a.data))?;
            let pseudo = load_pseudo(&a.pseudo)?;
            let train_pseudo = load_pseudo(&a.train_pseudo)?;
            let b = IndexBundle::load(&a.index)?;
            let pool = ExamplePool::new(&b.documents, &train_pseudo);
            let examples: Vec<Vec<CorrectionExample>> = match a.mode {
                ModeArg::Gnn => docs
                    .iter()
                    .map(|d| pool.retrieved(&b.index, &b.checkpoint.model, d, &b.checkpoint.embedding))
                    .collect::<Result<_, _>>()?,
                ModeArg::FixedExamples => vec![pool.fixed(a.fixed_k, derive_seed(seed, "fixed", 0))?; docs.len()],
            };
            let spec = g.backend(&a.backend.backend)?;
            let gw = gateway_for(&spec, "stage2", seed, &docs, Some(&pseudo.predictions()))?;
            let out = stage2_correct(&gw, &docs, &pseudo, &examples, &g.templates()?, &choice(&a.backend.template, seed), runner_cfg(a.backend.workers, &spec))?;
            for i in &out.incidents {
                log::warn!("incident {:?} on {}: {}", i.kind, i.doc_id, i.detail);
            }
            let mut set = silc_core::pipeline::PseudoLabelSet::new(format!("stage2-{seed}"));
            for (id, r) in out.predictions {
                set.insert(id, r);
            }
            save_pseudo(&a.out, &set)
        }
        Command::Eval(EvalCmd::Strict(a)) => {
            let gold = load_jsonl(&g.data(&a.gold))?;
            print_json(&strict_prf(&gold, &load_predictions(&a.pred)?)?)
        }
        Command::Eval(EvalCmd::Relaxed(a)) => {
            let gold = load_jsonl(&g.data(&a.gold))?;
            print_json(&relaxed_f1(&gold, &load_predictions(&a.pred)?)?)
        }
        Command::Forecast(a) => {
            let bars = load_prices(&g.data(&a.prices))?;
            let articles = match (&a.articles, a.features) {
                (Some(p), _) => load_articles(&g.data(p))?,
                (None, FeatureChoice::Ohlc) => Vec::new(),
                (None, _) => return Err(Error::Config("--articles is required for sentiment features".into())),
            };
            let mut opts = ForecastOptions::new(a.features);
            opts.steps = a.steps;
            opts.train.hidden = a.hidden;
            opts.train.epochs = a.epochs;
            opts.train.learning_rate = a.lr;
            opts.train.batch_size = a.batch_size;
            opts.train.seed = a.seed;
            let report = run_forecast(&bars, &articles, &opts)?;
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
            print_json(&serde_json::json!({
                "features": report.features,
                "seed": report.seed,
                "n_train": report.n_train,
                "n_test": report.n_test,
                "rmse": report.rmse,
            }))
        }
        Command::Run(a) => {
            let m = match (&a.config, &a.manifest) {
                (_, Some(mp)) => rerun_from_manifest(mp, &a.out)?,
                (Some(cp), None) => {
                    let mut cfg = ExperimentConfig::load(cp)?;
                    if a.skip_stage2 {
                        cfg.skip_stage2 = true;
                    }
                    if let (Some(mode), Some(s2)) = (a.mode, cfg.stage2.as_mut()) {
                        s2.mode = match mode {
                            ModeArg::Gnn => CorrectionMode::Gnn,
                            ModeArg::FixedExamples => CorrectionMode::Fixed,
                        };
                    }
                    if !a.seeds.is_empty() {
                        cfg.seeds = a.seeds.clone();
                    }
                    if let Some(w) = a.workers {
                        cfg.runner.workers = w;
                    }
                    run_experiment(&cfg, &a.out, None)?
                }
                (None, None) => unreachable!("clap requires one of --config and --manifest"),
            };
            print_json(&serde_json::json!({
                "run_id": m.run_id,
                "manifest": a.out.join(crate::experiment::MANIFEST),
                "mean": m.mean,
            }))
        }
        Command::Sweep(a) => {
            let cfg = ExperimentConfig::load(&a.config)?;
            let rows = sweep(&cfg, a.param, &a.values, &a.out)?;
            let summary: Vec<_> = rows
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "value": r.value,
                        "stage1_micro_f1": r.stage1_micro_f1,
                        "stage2_micro_f1": r.stage2_micro_f1,
                    })
                })
                .collect();
            print_json(&summary)
        }
    }
}

fn corpus(c: CorpusCmd, g: &GlobalConfig) -> Result<()> {
    match c {
        CorpusCmd::Restructure {
            format,
            input,
            out,
            occurrences,
        } => {
            let (docs, report) = restructure(&g.data(&input), format, occurrences)?;
            save_jsonl(&out, &docs)?;
            print_json(&report)
        }
        CorpusCmd::Stats { data } => print_json(&compute_stats(&load_jsonl(&g.data(&data))?)),
        CorpusCmd::Split {
            data,
            test_fraction,
            seed,
            out_dir,
        } => {
            let docs = load_jsonl(&g.data(&data))?;
            let (train, test) = split(&docs, SplitSpec::new(test_fraction, seed))?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            save_jsonl(&out_dir.join("train.jsonl"), &train)?;
            save_jsonl(&out_dir.join("test.jsonl"), &test)?;
            print_json(&serde_json::json!({"train": train.len(), "test": test.len()}))
        }
        CorpusCmd::Synth { n, clusters, seed, out } => {
            save_jsonl(&out, &crate::synth::clustered_corpus(n, clusters, seed))?;
            print_json(&serde_json::json!({"documents": n}))
        }
        CorpusCmd::SynthMarket {
            days,
            seed,
            prices,
            articles,
        } => {
            let (bars, lines) = crate::synth::sentiment_market(days, seed);
            save_prices(&prices, &bars)?;
            crate::io::write_jsonl(&articles, &lines)?;
            print_json(&serde_json::json!({"days": bars.len(), "articles": lines.len()}))
        }
    }
}
