//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary (`harness = false`) so the lines always reach the terminal.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use silc::experiment::{rerun_from_manifest, run_experiment, sweep, ExperimentConfig, RunManifest, RunStatus, SweepParam};
use silc::forecast_io::{run_forecast, FeatureChoice, ForecastOptions};
use silc::io::{load_jsonl, read_jsonl, save_jsonl, PredictionLine};
use silc::restructure::{restructure, Occurrences, SourceFormat};
use silc::synth::{clustered_corpus, sentiment_market};
use silc_core::corpus::{compute_stats, from_bilou, to_bilou, validate_dataset, Tokenization};
use silc_core::eval::{f1, strict_prf, Counts, Predictions};
use silc_core::forecast::{Lstm, Window};
use silc_core::gateway::{format_records, parse_prediction};
use silc_core::math::dot;
use silc_core::pipeline::{filter_training_set, FilterConfig, PseudoLabelSet};
use silc_core::retriever::{
    batch_loss_and_grad, contrastive_train, Batch, ChannelBatch, EncodedExample, ExactIndex, GatLayer, HashEmbedding,
    ModelConfig, NswIndex, NswParams, ReprChannel, RetrieverModel, SimilarityFeatures, SimilarityRules, TokenGraph,
    TrainConfig, VectorIndex,
};
use silc_core::{Document, EntityAnnotation, Lang, Polarity, PredictionRecord};

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if let false = $cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn report(n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let dt = t0.elapsed();
    let res = match res {
        Ok(msg) if dt > limit => Err(format!("{msg}; took {dt:.2?}, limit {limit:?}")),
        r => r,
    };
    match &res {
        Ok(msg) => println!("PASS criterion {n} {name}: {msg} [{dt:.2?}]"),
        Err(msg) => println!("FAIL criterion {n} {name}: {msg} [{dt:.2?}]"),
    }
    res.is_ok()
}

// 1 ------------------------------------------------------------------------

/// Brute force: every gold tuple is matched to at most one equal prediction
/// by scanning with used-flags.
fn oracle_counts(gold: &[Document], pred: &Predictions) -> (Counts, [Counts; 3]) {
    let mut micro = Counts::default();
    let mut cls = [Counts::default(); 3];
    for d in gold {
        let recs = pred.get(&d.id).cloned().unwrap_or_default();
        let mut used = vec![false; d.entities.len()];
        for r in &recs {
            let hit = (0..d.entities.len()).find(|&g| {
                let e = &d.entities[g];
                !used[g] && e.value == r.value && e.start == r.start && e.end == r.end && e.sentiment == r.tag
            });
            let c = &mut cls[r.tag.index()];
            match hit {
                Some(g) => {
                    used[g] = true;
                    micro.tp += 1;
                    c.tp += 1;
                }
                None => {
                    micro.fp += 1;
                    c.fp += 1;
                }
            }
        }
        for (g, e) in d.entities.iter().enumerate() {
            if !used[g] {
                micro.fn_ += 1;
                cls[e.sentiment.index()].fn_ += 1;
            }
        }
    }
    (micro, cls)
}

fn prf(c: Counts) -> (f64, f64, f64) {
    let p = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let r = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    (p, r, f1(p, r))
}

fn random_tuple(rng: &mut ChaCha8Rng) -> (String, usize, usize, Polarity) {
    let v = ["Acme", "Globex", "Hooli", "Initech"].choose(rng).unwrap().to_string();
    let s = rng.random_range(0..4usize);
    (v, s, s + rng.random_range(1..3), *Polarity::ALL.choose(rng).unwrap())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tuples = 0;
    for case in 0..200 {
        let n_docs = rng.random_range(1..=10);
        let mut gold = Vec::new();
        let mut pred = Predictions::new();
        for i in 0..n_docs {
            let id = format!("c{case}-d{i}");
            let ents = (0..rng.random_range(0..=5))
                .map(|_| {
                    let (v, s, e, p) = random_tuple(&mut rng);
                    EntityAnnotation::new(v, s, e, p)
                })
                .collect::<Vec<_>>();
            let mut recs: Vec<PredictionRecord> = Vec::new();
            for _ in 0..rng.random_range(0..=5) {
                // half copied from gold (possibly re-tagged), half random
                if !ents.is_empty() && rng.random_bool(0.5) {
                    let e = ents.choose(&mut rng).unwrap();
                    let tag = if rng.random_bool(0.7) { e.sentiment } else { *Polarity::ALL.choose(&mut rng).unwrap() };
                    recs.push(PredictionRecord::new(e.value.clone(), e.start, e.end, tag));
                } else {
                    let (v, s, e, p) = random_tuple(&mut rng);
                    recs.push(PredictionRecord::new(v, s, e, p));
                }
            }
            tuples += ents.len() + recs.len();
            let mut d = Document::new(id.clone(), "x".repeat(8), Lang::En);
            d.entities = ents;
            gold.push(d);
            if rng.random_bool(0.9) {
                pred.insert(id, recs);
            }
        }
        let got = strict_prf(&gold, &pred).map_err(|e| e.to_string())?;
        let (micro, cls) = oracle_counts(&gold, &pred);
        ensure!(got.counts == Some(micro), "case {case}: counts {:?} vs oracle {micro:?}", got.counts);
        let (p, r, f) = prf(micro);
        ensure!(
            (got.micro.precision, got.micro.recall, got.micro.f1) == (p, r, f),
            "case {case}: micro ratios differ"
        );
        let mut macro_sum = 0.0;
        for pol in Polarity::ALL {
            let c = got.class(pol);
            ensure!(c.counts == Some(cls[pol.index()]), "case {case}: {pol:?} counts differ");
            let (p, r, f) = prf(cls[pol.index()]);
            ensure!((c.scores.precision, c.scores.recall, c.scores.f1) == (p, r, f), "case {case}: {pol:?} ratios differ");
            macro_sum += f;
        }
        ensure!(got.macro_f1 == macro_sum / 3.0, "case {case}: macro differs");
    }
    Ok(format!("200 cases, {tuples} tuples, exact agreement"))
}

// 2 ------------------------------------------------------------------------

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Expected {
    format: SourceFormat,
    files: &'static [&'static str],
    texts: usize,
    entities: usize,
    neutral: Option<usize>,
}

const TABLE: [Expected; 3] = [
    Expected {
        format: SourceFormat::Finentity,
        files: &["FinEntity.json", "finentity.json"],
        texts: 979,
        entities: 2131,
        neutral: Some(1130),
    },
    Expected {
        format: SourceFormat::Sentfin,
        files: &["SEntFiN-v1.1.csv", "SEntFiN.csv", "sentfin.csv"],
        texts: 10753,
        entities: 14439,
        neutral: None,
    },
    Expected {
        format: SourceFormat::Efsa,
        files: &["EFSA.json", "efsa.json", "efsa.jsonl"],
        texts: 10832,
        entities: 14915,
        neutral: None,
    },
];

fn criterion_2() -> Outcome {
    // bundled fixtures: schema, stats and round trips
    let docs = load_jsonl(&fixture("docs.jsonl")).map_err(|e| e.to_string())?;
    ensure!(docs.len() == 50, "fixture has {} docs", docs.len());
    validate_dataset(&docs).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_jsonl(&tmp.path().join("d.jsonl"), &docs).map_err(|e| e.to_string())?;
    ensure!(load_jsonl(&tmp.path().join("d.jsonl")).map_err(|e| e.to_string())? == docs, "jsonl round trip differs");
    let fe: Vec<serde_json::Value> = docs
        .iter()
        .map(|d| {
            let ann: Vec<_> = d
                .entities
                .iter()
                .map(|e| serde_json::json!({"start": e.start, "end": e.end, "label": e.sentiment.label(), "value": e.value}))
                .collect();
            serde_json::json!({"content": d.text, "annotations": ann})
        })
        .collect();
    let fe_path = tmp.path().join("fe.json");
    std::fs::write(&fe_path, serde_json::to_vec(&fe).unwrap()).map_err(|e| e.to_string())?;
    let (back, _) = restructure(&fe_path, SourceFormat::Finentity, Occurrences::All).map_err(|e| e.to_string())?;
    for (a, b) in docs.iter().zip(&back) {
        ensure!(a.text == b.text && a.entities == b.entities, "restructure round trip differs on {}", a.id);
    }
    let stats = compute_stats(&docs);
    let n_ent: usize = docs.iter().map(|d| d.entities.len()).sum();
    ensure!(stats.n_texts == 50 && stats.n_entities == n_ent, "fixture stats wrong");
    ensure!(stats.n_positive + stats.n_negative + stats.n_neutral == n_ent, "polarity counts do not add up");

    let mut notes = vec!["fixtures ok".to_string()];
    let dir = std::env::var_os("SILC_DATA_DIR").map(PathBuf::from);
    for exp in &TABLE {
        let found = dir.as_ref().and_then(|d| exp.files.iter().map(|f| d.join(f)).find(|p| p.exists()));
        let Some(path) = found else {
            notes.push(format!("{:?} SKIPPED (set SILC_DATA_DIR to a directory holding one of {:?})", exp.format, exp.files));
            continue;
        };
        let (docs, _) = restructure(&path, exp.format, Occurrences::All).map_err(|e| e.to_string())?;
        let s = compute_stats(&docs);
        ensure!(
            s.n_texts == exp.texts && s.n_entities == exp.entities,
            "{:?}: {} texts / {} entities, expected {} / {}",
            exp.format,
            s.n_texts,
            s.n_entities,
            exp.texts,
            exp.entities
        );
        if let Some(n) = exp.neutral {
            ensure!(s.n_neutral == n, "{:?}: {} neutral, expected {n}", exp.format, s.n_neutral);
        }
        notes.push(format!("{:?} {} / {} reproduced", exp.format, s.n_texts, s.n_entities));
    }
    if notes.iter().any(|n| n.contains("SKIPPED")) {
        eprintln!("notice: public datasets absent; only the bundled fixtures were checked for criterion 2");
    }
    Ok(notes.join("; "))
}

// 3 ------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let mut set = PseudoLabelSet::new("fixture");
    for i in 0..140 {
        set.insert(format!("doc-{i:03}"), Vec::new());
    }
    let incorrect: BTreeSet<String> = (0..140).filter(|i| i % 7 < 2).map(|i| format!("doc-{i:03}")).collect();
    for (id, e) in set.entries.iter_mut() {
        e.correct = Some(!incorrect.contains(id));
    }
    ensure!(incorrect.len() == 40, "fixture has {} incorrect", incorrect.len());
    for r in [0.0f64, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let want = 40 + (100.0 * r + 1e-9).floor() as usize;
        for seed in 0..5 {
            let cfg = FilterConfig { keep_ratio: r, seed };
            let a = filter_training_set(&set, cfg).map_err(|e| e.to_string())?;
            ensure!(a.len() == want, "r={r} seed={seed}: {} kept, expected {want}", a.len());
            let kept: BTreeSet<&String> = a.iter().collect();
            ensure!(incorrect.iter().all(|i| kept.contains(i)), "r={r} seed={seed}: an incorrect sample was dropped");
            ensure!(filter_training_set(&set, cfg).map_err(|e| e.to_string())? == a, "r={r} seed={seed}: not reproducible");
        }
    }
    Ok("6 ratios x 5 seeds: |D| = 40 + floor(100r), all incorrect kept, stable".into())
}

// 4 ------------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

/// Largest relative error between `analytic` and central differences of `f`.
/// Components where both sides are below 1e-6 are compared with that floor.
fn max_rel_error(analytic: &[f64], f: impl Fn(&[f64]) -> f64, at: &[f64]) -> f64 {
    let mut p = at.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..at.len() {
        p[i] = at[i] + FD_STEP;
        let up = f(&p);
        p[i] = at[i] - FD_STEP;
        let down = f(&p);
        p[i] = at[i];
        let num = (up - down) / (2.0 * FD_STEP);
        let rel = (num - analytic[i]).abs() / num.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-s..s)).collect()
}

#[allow(clippy::needless_range_loop)]
fn random_neighbors(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        adj[i][i] = true;
        for j in (0..i).filter(|_| rng.random_bool(0.4)) {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    adj.iter().map(|r| (0..n).filter(|&j| r[j]).collect()).collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut gat_worst, mut enc_worst, mut nce_worst) = (0.0f64, 0.0f64, 0.0f64);
    for draw in 0..20 {
        // GAT layer: parameters and inputs
        let n = rng.random_range(1..=8);
        let (di, dout, heads) = (rng.random_range(1..=6), rng.random_range(1..=6), rng.random_range(1..=3));
        let layer = GatLayer::new(di, dout, heads, 0.2);
        let p = uniform(&mut rng, layer.n_params(), 1.0);
        let x = uniform(&mut rng, n * di, 1.0);
        let nb = random_neighbors(&mut rng, n);
        let c = uniform(&mut rng, n * layer.out_dim(), 1.0);
        let loss = |p: &[f64], x: &[f64]| -> f64 {
            let out = layer.forward(p, x, &nb).unwrap().out;
            out.iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let cache = layer.forward(&p, &x, &nb).unwrap();
        let mut g = vec![0.0; p.len()];
        let dx = layer.backward(&p, &x, &nb, &cache, &c, &mut g);
        gat_worst = gat_worst.max(max_rel_error(&g, |q| loss(q, &x), &p));
        gat_worst = gat_worst.max(max_rel_error(&dx, |y| loss(&p, y), &x));

        // full encoder and the masked contrastive loss
        let d = rng.random_range(2..=6);
        let cfg = ModelConfig {
            embed_dim: d,
            heads: rng.random_range(1..=2),
            head_dim: rng.random_range(1..=3),
            window: 2,
            slope: 0.2,
            seed: draw,
        };
        let m = RetrieverModel::new(cfg);
        let mut params = m.params.clone();
        params.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        let graphs: Vec<TokenGraph> = (0..5)
            .map(|_| {
                let n = rng.random_range(1..=8);
                TokenGraph::window(uniform(&mut rng, n * d, 1.0), d, 2)
            })
            .collect();
        let h = cfg.hidden();
        let (c1, c2) = (uniform(&mut rng, h, 1.0), uniform(&mut rng, h, 1.0));
        let enc = |p: &[f64]| {
            let f = m.forward_with(p, &graphs[0]).unwrap();
            dot(&f.h_lig, &c1) + dot(&f.h_sen, &c2)
        };
        let fwd = m.forward_with(&params, &graphs[0]).unwrap();
        let mut g = vec![0.0; params.len()];
        m.backward(&params, &graphs[0], &fwd, &c1, &c2, &mut g);
        enc_worst = enc_worst.max(max_rel_error(&g, enc, &params));

        let batch = Batch {
            linguistic: ChannelBatch {
                anchors: vec![0, 1],
                candidates: vec![2, 3, 4, 0],
                targets: vec![0, 1],
                mask: vec![vec![false, false, false, true], vec![false, false, rng.random_bool(0.5), false]],
            },
            sentiment: ChannelBatch {
                anchors: vec![4, 2],
                candidates: vec![1, 3, 0],
                targets: vec![2, 0],
                mask: vec![vec![false, rng.random_bool(0.5), false], vec![false, false, false]],
            },
        };
        let (_, g) = batch_loss_and_grad(&m, &params, &graphs, &batch, 0.5).unwrap();
        nce_worst = nce_worst.max(max_rel_error(&g, |p| batch_loss_and_grad(&m, p, &graphs, &batch, 0.5).unwrap().0, &params));
    }
    let worst = gat_worst.max(enc_worst).max(nce_worst);
    ensure!(worst <= REL_TOL, "max relative error gat {gat_worst:.2e} encoder {enc_worst:.2e} contrastive {nce_worst:.2e}");
    Ok(format!("20 draws, max relative error gat {gat_worst:.1e} encoder {enc_worst:.1e} contrastive {nce_worst:.1e}"))
}

// 5 ------------------------------------------------------------------------

/// Two planted sentence shapes crossed with two sentiment vocabularies.
fn planted_corpus(n: usize, seed: u64, prefix: &str) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cos = ["Acme", "Globex", "Initech", "Umbrella", "Hooli", "Stark", "Wayne", "Wonka", "Tyrell", "Cyberdyne"];
    let pos_v = ["rose", "jumps", "gains", "climbs", "soars"];
    let neg_v = ["fell", "drops", "slips", "sinks", "plunges"];
    let pos_a = ["strongly", "sharply", "steadily", "firmly"];
    let neg_a = ["badly", "weakly", "heavily", "sadly"];
    let nouns = ["profit", "revenue", "outlook", "guidance", "margin"];
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let co = *cos.choose(&mut rng).unwrap();
            let (v, a) = if positive {
                (*pos_v.choose(&mut rng).unwrap(), *pos_a.choose(&mut rng).unwrap())
            } else {
                (*neg_v.choose(&mut rng).unwrap(), *neg_a.choose(&mut rng).unwrap())
            };
            let text = if (i / 2) % 2 == 0 {
                format!("{co} {v} {a}")
            } else {
                let noun = *nouns.choose(&mut rng).unwrap();
                let pct: u32 = rng.random_range(1..20);
                format!("the {noun} of {co} {v} {a} by {pct}% in the quarter")
            };
            let p = if positive { Polarity::Positive } else { Polarity::Negative };
            let start = text[..text.find(co).unwrap()].chars().count();
            Document::new(format!("{prefix}{i:03}"), text, Lang::En)
                .with_entities(vec![EntityAnnotation::new(co, start, start + co.chars().count(), p)])
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let train = planted_corpus(40, 1, "t");
    let held = planted_corpus(20, 2, "h");
    let emb = HashEmbedding::new(32, 7);
    let rules = SimilarityRules::FINENTITY;
    let cfg = TrainConfig {
        learning_rate: 1e-4,
        epochs: 10,
        batch_pairs: 2,
        ..TrainConfig::default()
    };
    let out = contrastive_train(RetrieverModel::new(ModelConfig::default()), &train, &emb, rules, &cfg).map_err(|e| e.to_string())?;
    let ratio = out.trace.last() / out.trace.initial();
    ensure!(ratio <= 0.7, "final/initial loss {ratio:.3}");
    let enc: Vec<EncodedExample> = held.iter().map(|d| out.model.encode(d, &emb).unwrap()).collect();
    let feats: Vec<SimilarityFeatures> = held.iter().map(SimilarityFeatures::of).collect();
    let mut fracs = Vec::new();
    for (name, lig) in [("linguistic", true), ("sentiment", false)] {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for i in 0..held.len() {
            for j in i + 1..held.len() {
                let (s, th, c) = if lig {
                    (feats[i].linguistic(&feats[j]), rules.theta_lig, dot(&enc[i].h_lig, &enc[j].h_lig))
                } else {
                    (feats[i].sentiment(&feats[j]), rules.theta_sen, dot(&enc[i].h_sen, &enc[j].h_sen))
                };
                if s >= th {
                    pos.push(c)
                } else {
                    neg.push(c)
                }
            }
        }
        ensure!(!pos.is_empty() && !neg.is_empty(), "{name}: degenerate held-out pairs");
        let neg_mean = neg.iter().sum::<f64>() / neg.len() as f64;
        let frac = pos.iter().filter(|c| **c > neg_mean).count() as f64 / pos.len() as f64;
        ensure!(frac >= 0.8, "{name}: {frac:.3} of positive pairs above the negative mean");
        fracs.push(format!("{name} {frac:.2}"));
    }
    Ok(format!("loss ratio {ratio:.3}, held-out separation {}", fracs.join(", ")))
}

// 6 ------------------------------------------------------------------------

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 32;
    let examples: Vec<EncodedExample> = (0..1000)
        .map(|i| EncodedExample {
            doc_id: format!("e{i:04}"),
            h_lig: unit(&mut rng, d),
            h_sen: unit(&mut rng, d),
            h_avg: unit(&mut rng, d),
        })
        .collect();
    let exact = ExactIndex {
        model_version: "v".into(),
        examples: examples.clone(),
    };
    let nsw = NswIndex::build(exact.clone(), NswParams::default());
    let (mut agree, mut approx, mut total) = (0, 0, 0);
    for _ in 0..100 {
        let q: Vec<f64> = unit(&mut rng, d);
        for c in ReprChannel::ALL {
            let brute = examples
                .iter()
                .map(|e| (dot(c.of(e), &q), &e.doc_id))
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(a.1)))
                .unwrap()
                .1;
            total += 1;
            agree += usize::from(&exact.search(c, &q, 1, None)[0].id == brute);
            approx += usize::from(&nsw.search(c, &q, 1, None)[0].id == brute);
        }
    }
    ensure!(agree == total, "exact index agreed on {agree}/{total}");
    let share = approx as f64 / total as f64;
    ensure!(share >= 0.99, "approximate index agreed on {approx}/{total}");
    Ok(format!("exact {agree}/{total}, approximate {approx}/{total}"))
}

// 7 ------------------------------------------------------------------------

fn pipeline_config(dir: &Path) -> ExperimentConfig {
    save_jsonl(&dir.join("data.jsonl"), &clustered_corpus(200, 20, 7)).unwrap();
    let v = serde_json::json!({
        "dataset": "data.jsonl",
        "split": {"test_fraction": 0.2, "seed": 1},
        "stage1": {"backend": {"kind": "mock", "policy": {"perturb": {"error_rate": 0.2, "seed": 3}}}},
        "filter": {"keep_ratio": 0.6, "seed": 0},
        "retriever": {"epochs": 2, "max_pairs": 200, "batch_pairs": 8},
        "stage2": {"backend": {"kind": "mock", "policy": {"fix_planted": {"fraction": 0.75, "seed": 4}}}, "mode": "gnn"},
        "seeds": [0, 1, 2]
    });
    std::fs::write(dir.join("run.json"), serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    ExperimentConfig::load(&dir.join("run.json")).unwrap()
}

#[derive(serde::Deserialize)]
struct Flip {
    doc_id: String,
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = pipeline_config(tmp.path());
    let out = tmp.path().join("run");
    let m: RunManifest = run_experiment(&cfg, &out, None).map_err(|e| e.to_string())?;
    ensure!(m.status == RunStatus::Complete, "run status {:?}", m.status);
    let all = load_jsonl(&cfg.dataset).map_err(|e| e.to_string())?;
    let n_all: usize = all.iter().map(|d| d.entities.len()).sum();
    let mut lines = Vec::new();
    for r in &m.runs {
        let s1 = &r.report.stage1.strict;
        let s2 = &r.report.stage2.as_ref().ok_or("no stage-2 report")?.strict;
        let c = s1.counts.ok_or("no counts")?;
        let n_test = c.tp + c.fn_;
        let test_lines: Vec<PredictionLine> = read_jsonl(&out.join(&r.files["stage1_test.jsonl"])).map_err(|e| e.to_string())?;
        let test_ids: BTreeSet<String> = test_lines.into_iter().map(|l| l.id).collect();
        let flips: Vec<Flip> = read_jsonl(&out.join(&r.files["flip_log.jsonl"])).map_err(|e| e.to_string())?;
        let in_test = flips.iter().filter(|f| test_ids.contains(&f.doc_id)).count();
        // each flipped test tuple is one false positive and one false negative
        let exact = 1.0 - in_test as f64 / n_test as f64;
        ensure!((s1.micro.f1 - exact).abs() < 1e-12, "seed {}: stage-1 F1 {} vs flip-log value {exact}", r.seed, s1.micro.f1);
        // flips land in the test split hypergeometrically
        let p = flips.len() as f64 / n_all as f64;
        let sd = (n_test as f64 * p * (1.0 - p) * (n_all - n_test) as f64 / (n_all - 1) as f64).sqrt() / n_test as f64;
        ensure!((s1.micro.f1 - 0.8).abs() <= 3.0 * sd + 1e-9, "seed {}: stage-1 F1 {:.4} outside 0.8 ± {:.4}", r.seed, s1.micro.f1, 3.0 * sd);
        ensure!(s2.micro.f1 > s1.micro.f1, "seed {}: stage 2 {:.4} not above stage 1 {:.4}", r.seed, s2.micro.f1, s1.micro.f1);
        lines.push(format!("seed {} {:.3}->{:.3} (band ±{:.3})", r.seed, s1.micro.f1, s2.micro.f1, 3.0 * sd));
    }
    let again = rerun_from_manifest(&out.join("manifest.json"), &tmp.path().join("again")).map_err(|e| e.to_string())?;
    for (a, b) in m.runs.iter().zip(&again.runs) {
        let ra = std::fs::read(out.join(&a.files["report.json"])).map_err(|e| e.to_string())?;
        let rb = std::fs::read(tmp.path().join("again").join(&b.files["report.json"])).map_err(|e| e.to_string())?;
        ensure!(ra == rb, "seed {}: rerun report differs", a.seed);
    }
    let mut one = cfg.clone();
    one.seeds = vec![0];
    let grid = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let rows = sweep(&one, SweepParam::KeepRatio, &grid, &tmp.path().join("sweep")).map_err(|e| e.to_string())?;
    ensure!(rows.len() == grid.len(), "sweep produced {} rows", rows.len());
    for (row, r) in rows.iter().zip(grid) {
        ensure!(row.value == r && row.stage2_micro_f1.is_some(), "sweep row for r={r} incomplete");
    }
    Ok(format!("{}; rerun identical; sweep over {} ratios", lines.join(", "), grid.len()))
}

// 8 ------------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = Lstm::new(3, 4, 2);
    let windows: Vec<Window> = (0..4)
        .map(|k| Window {
            x: uniform(&mut rng, 6 * 3, 1.0),
            y: rng.random_range(-1.0..1.0),
            target_day: k,
        })
        .collect();
    let refs: Vec<&Window> = windows.iter().collect();
    let (_, g) = m.mse_and_grad(&m.params, &refs).map_err(|e| e.to_string())?;
    let worst = max_rel_error(&g, |p| m.mse_and_grad(p, &refs).unwrap().0, &m.params);
    ensure!(worst <= REL_TOL, "BPTT max relative error {worst:.2e}");

    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..10 {
        let (bars, articles) = sentiment_market(300, seed);
        let run = |f: FeatureChoice| {
            let mut o = ForecastOptions::new(f);
            o.train.hidden = 16;
            o.train.epochs = 40;
            o.train.learning_rate = 5e-3;
            o.train.batch_size = 16;
            o.train.seed = seed;
            run_forecast(&bars, &articles, &o).map(|r| r.rmse)
        };
        let with = run(FeatureChoice::OhlcEls).map_err(|e| e.to_string())?;
        let without = run(FeatureChoice::Ohlc).map_err(|e| e.to_string())?;
        wins += usize::from(with <= without);
        pairs.push(format!("{with:.3}/{without:.3}"));
    }
    ensure!(wins >= 9, "sentiment helped in {wins}/10 seeds: {}", pairs.join(" "));
    Ok(format!("BPTT rel error {worst:.1e}; sentiment RMSE <= baseline in {wins}/10 seeds"))
}

// 9 ------------------------------------------------------------------------

const EN_WORDS: [&str; 10] = ["Acme", "Corp", "shares", "rose", "Bank", "of", "China", "fell", "S&P", "3.5%"];
const ZH_CHARS: [char; 12] = ['荣', '联', '科', '技', '股', '份', '上', '涨', '下', '跌', '银', '行'];

fn random_doc(rng: &mut ChaCha8Rng, zh: bool, i: usize) -> (Document, Tokenization) {
    let (text, mode) = if zh {
        let n = rng.random_range(1..30);
        ((0..n).map(|_| *ZH_CHARS.choose(rng).unwrap()).collect::<String>(), Tokenization::Char)
    } else {
        let n = rng.random_range(1..15);
        ((0..n).map(|_| *EN_WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" "), Tokenization::Whitespace)
    };
    let toks = silc_core::corpus::tokenize(&text, mode);
    let mut ents = Vec::new();
    let mut t = 0;
    while t < toks.len() {
        if rng.random_bool(0.3) {
            let last = (t + rng.random_range(0..3)).min(toks.len() - 1);
            let (s, e) = (toks[t].start, toks[last].end);
            let value: String = text.chars().skip(s).take(e - s).collect();
            ents.push(EntityAnnotation::new(value, s, e, *Polarity::ALL.choose(rng).unwrap()));
            t = last + 1;
        }
        t += 1;
    }
    let lang = if zh { Lang::Zh } else { Lang::En };
    (Document::new(format!("g{i}"), text, lang).with_entities(ents), mode)
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut n_ents = 0;
    for i in 0..1000 {
        let zh = i % 2 == 1;
        let (doc, mode) = random_doc(&mut rng, zh, i);
        n_ents += doc.entities.len();
        let tagged = to_bilou(&doc, mode).map_err(|e| format!("case {i}: {e}"))?;
        let back = from_bilou(&doc.text, &tagged).map_err(|e| format!("case {i}: {e}"))?;
        ensure!(back == doc.entities, "BILOU case {i} differs");
        let recs: Vec<PredictionRecord> = doc.entities.iter().map(PredictionRecord::from).collect();
        let text = format_records(&recs, doc.lang);
        let parsed = parse_prediction(&text).map_err(|e| format!("case {i}: {e}"))?;
        ensure!(parsed == recs, "record case {i} differs: {text}");
        let json = serde_json::to_string(&recs).unwrap();
        ensure!(parse_prediction(&json).map_err(|e| e.to_string())? == recs, "json record case {i} differs");
    }
    Ok(format!("1000 cases (500 en, 500 zh), {n_ents} entities"))
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 9] = [
        (1, "evaluator oracle equivalence", 5, criterion_1),
        (2, "dataset statistics", 60, criterion_2),
        (3, "filter size law", 1, criterion_3),
        (4, "GAT and contrastive gradient checks", 30, criterion_4),
        (5, "retriever training efficacy", 120, criterion_5),
        (6, "retrieval correctness", 30, criterion_6),
        (7, "end-to-end mock pipeline", 60, criterion_7),
        (8, "LSTM forecaster", 120, criterion_8),
        (9, "codec round trips", 5, criterion_9),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, secs, f) in criteria {
        if filter.as_ref().is_some_and(|s| !name.contains(s.as_str()) && s != &n.to_string()) {
            continue;
        }
        ran += 1;
        if !report(n, name, Duration::from_secs(secs), f) {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
