use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    make_pairs, ChannelPairs, EmbeddingProvider, PairSets, RetrieverError, RetrieverModel, SimilarityFeatures,
    SimilarityRules, TokenGraph, TrainedChannel,
};
use crate::corpus::Document;
use crate::math::{dot, exp, ln};
use crate::optim::{clip_norm, AdamW};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Anchor/positive pairs per channel per step.
    pub batch_pairs: usize,
    pub temperature: f64,
    pub weight_decay: f64,
    /// Cap on mined pairs per channel and polarity.
    pub max_pairs: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 10,
            batch_pairs: 8,
            temperature: 0.1,
            weight_decay: 0.01,
            max_pairs: 2000,
            clip_norm: None,
            seed: 0,
        }
    }
}

/// One channel's share of a training step.
///
/// Each anchor is scored against every candidate; `targets[k]` is the index
/// of anchor `k`'s positive among the candidates and `mask[k][c]` excludes
/// candidates that are the anchor itself or are rule-similar to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBatch {
    pub anchors: Vec<usize>,
    pub candidates: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub linguistic: ChannelBatch,
    pub sentiment: ChannelBatch,
}

/// Mean evaluation loss before training followed by one value per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub losses: Vec<f64>,
}

impl LossTrace {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RetrieverModel,
    pub trace: LossTrace,
    pub pairs: PairSets,
    pub steps: u64,
}

impl ChannelBatch {
    /// Builds a batch from `(anchor, positive)` pairs and extra negative docs.
    pub fn build(
        pairs: &[(usize, usize)],
        negatives: &[usize],
        features: &[SimilarityFeatures],
        channel: TrainedChannel,
        threshold: f64,
    ) -> Self {
        let mut candidates: Vec<usize> = Vec::new();
        let mut slot = BTreeMap::new();
        for &d in pairs.iter().map(|(_, p)| p).chain(negatives) {
            slot.entry(d).or_insert_with(|| {
                candidates.push(d);
                candidates.len() - 1
            });
        }
        let sim = |a: usize, b: usize| match channel {
            TrainedChannel::Linguistic => features[a].linguistic(&features[b]),
            TrainedChannel::Sentiment => features[a].sentiment(&features[b]),
        };
        let anchors: Vec<usize> = pairs.iter().map(|(a, _)| *a).collect();
        let targets: Vec<usize> = pairs.iter().map(|(_, p)| slot[p]).collect();
        let mask = anchors
            .iter()
            .zip(&targets)
            .map(|(&a, &t)| {
                candidates
                    .iter()
                    .enumerate()
                    .map(|(c, &d)| c != t && (d == a || sim(a, d) >= threshold))
                    .collect()
            })
            .collect();
        Self { anchors, candidates, targets, mask }
    }

    fn docs(&self) -> impl Iterator<Item = usize> + '_ {
        self.anchors.iter().chain(&self.candidates).copied()
    }
}

/// Temperature-scaled cross-entropy summed over the two channels, with its
/// gradient with respect to `params`. Each channel term is the mean over the
/// batch anchors of `-log softmax(u_a·u_c / τ)[positive]`.
pub fn batch_loss_and_grad(
    model: &RetrieverModel,
    params: &[f64],
    graphs: &[TokenGraph],
    batch: &Batch,
    temperature: f64,
) -> Result<(f64, Vec<f64>), RetrieverError> {
    let mut docs: Vec<usize> = batch.linguistic.docs().chain(batch.sentiment.docs()).collect();
    docs.sort_unstable();
    docs.dedup();
    let mut fwd = BTreeMap::new();
    for &d in &docs {
        fwd.insert(d, model.forward_with(params, &graphs[d])?);
    }
    let h = model.config.hidden();
    let mut upstream: BTreeMap<usize, [Vec<f64>; 2]> = docs.iter().map(|&d| (d, [vec![0.0; h], vec![0.0; h]])).collect();
    let mut total = 0.0;
    for (ci, channel, cb) in [
        (0, TrainedChannel::Linguistic, &batch.linguistic),
        (1, TrainedChannel::Sentiment, &batch.sentiment),
    ] {
        let b = cb.anchors.len();
        if b == 0 {
            continue;
        }
        for k in 0..b {
            let a = cb.anchors[k];
            let ua = fwd[&a].unit(channel).to_vec();
            let live: Vec<usize> = (0..cb.candidates.len()).filter(|&c| !cb.mask[k][c]).collect();
            let scores: Vec<f64> = live
                .iter()
                .map(|&c| dot(&ua, fwd[&cb.candidates[c]].unit(channel)) / temperature)
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| exp(s - m)).sum();
            let lse = m + ln(z);
            let t = live.iter().position(|&c| c == cb.targets[k]).expect("target is never masked");
            total += (lse - scores[t]) / b as f64;
            for (idx, &c) in live.iter().enumerate() {
                let coef = (exp(scores[idx] - lse) - if idx == t { 1.0 } else { 0.0 }) / (b as f64 * temperature);
                if coef == 0.0 {
                    continue;
                }
                let d = cb.candidates[c];
                let uc = fwd[&d].unit(channel).to_vec();
                for (g, v) in upstream.get_mut(&a).unwrap()[ci].iter_mut().zip(&uc) {
                    *g += coef * v;
                }
                for (g, v) in upstream.get_mut(&d).unwrap()[ci].iter_mut().zip(&ua) {
                    *g += coef * v;
                }
            }
        }
    }
    let mut grad = vec![0.0; params.len()];
    for (&d, [dl, ds]) in &upstream {
        model.backward(params, &graphs[d], &fwd[&d], dl, ds, &mut grad);
    }
    Ok((total, grad))
}

/// Fixed-size chunks of a channel's pairs, cycling if `step` runs past the end.
fn chunk(pairs: &[(usize, usize)], size: usize, step: usize) -> Vec<(usize, usize)> {
    (0..size.min(pairs.len()))
        .map(|i| pairs[(step * size + i) % pairs.len()])
        .collect()
}

fn negative_docs(negatives: &[(usize, usize)], size: usize, step: usize) -> Vec<usize> {
    if negatives.is_empty() {
        return Vec::new();
    }
    chunk(negatives, size, step).into_iter().flat_map(|(a, b)| [a, b]).collect()
}

fn orient(pairs: &[(usize, usize)], rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    pairs
        .iter()
        .map(|&(a, b)| if rng.random_bool(0.5) { (b, a) } else { (a, b) })
        .collect()
}

type Pairs<'a> = &'a [(usize, usize)];

struct Plan<'a> {
    features: &'a [SimilarityFeatures],
    size: usize,
}

impl Plan<'_> {
    fn batch(
        &self,
        lig: (Pairs<'_>, &ChannelPairs),
        sen: (Pairs<'_>, &ChannelPairs),
        negs: (Pairs<'_>, Pairs<'_>),
        step: usize,
    ) -> Batch {
        Batch {
            linguistic: ChannelBatch::build(
                &chunk(lig.0, self.size, step),
                &negative_docs(negs.0, self.size, step),
                self.features,
                TrainedChannel::Linguistic,
                lig.1.threshold,
            ),
            sentiment: ChannelBatch::build(
                &chunk(sen.0, self.size, step),
                &negative_docs(negs.1, self.size, step),
                self.features,
                TrainedChannel::Sentiment,
                sen.1.threshold,
            ),
        }
    }
}

fn steps_per_epoch(pairs: &PairSets, size: usize) -> usize {
    let l = pairs.linguistic.positives.len().div_ceil(size);
    let s = pairs.sentiment.positives.len().div_ceil(size);
    l.max(s).max(1)
}

/// Contrastive training of both channels. Deterministic given `config.seed`.
pub fn contrastive_train(
    model: RetrieverModel,
    train: &[Document],
    provider: &dyn EmbeddingProvider,
    rules: SimilarityRules,
    config: &TrainConfig,
) -> Result<TrainOutcome, RetrieverError> {
    model.check()?;
    if train.len() < 2 {
        return Err(RetrieverError::TooFewDocuments(train.len()));
    }
    let features: Vec<SimilarityFeatures> = train.iter().map(SimilarityFeatures::of).collect();
    let pairs = make_pairs(&features, rules, config.max_pairs, config.seed)?;
    let graphs = train
        .iter()
        .map(|d| model.graph(d, provider))
        .collect::<Result<Vec<_>, _>>()?;
    let size = config.batch_pairs.max(1);
    let plan = Plan { features: &features, size };
    let n_steps = steps_per_epoch(&pairs, size);
    let (lp, sp) = (&pairs.linguistic, &pairs.sentiment);

    let eval_batches: Vec<Batch> = (0..n_steps)
        .map(|s| plan.batch((&lp.positives, lp), (&sp.positives, sp), (&lp.negatives, &sp.negatives), s))
        .collect();
    let eval = |m: &RetrieverModel, epoch: usize| -> Result<f64, RetrieverError> {
        let mut sum = 0.0;
        for (step, b) in eval_batches.iter().enumerate() {
            let (l, _) = batch_loss_and_grad(m, &m.params, &graphs, b, config.temperature)?;
            if !l.is_finite() {
                return Err(RetrieverError::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("evaluation loss {l}"),
                });
            }
            sum += l;
        }
        Ok(sum / eval_batches.len() as f64)
    };

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5bd1_e995);
    let mut opt = AdamW::new(model.params.len(), config.learning_rate, config.weight_decay);
    let mut losses = vec![eval(&model, 0)?];
    for epoch in 1..=config.epochs {
        let mut lig = orient(&lp.positives, &mut rng);
        let mut sen = orient(&sp.positives, &mut rng);
        let mut lneg = lp.negatives.clone();
        let mut sneg = sp.negatives.clone();
        lig.shuffle(&mut rng);
        sen.shuffle(&mut rng);
        lneg.shuffle(&mut rng);
        sneg.shuffle(&mut rng);
        for step in 0..n_steps {
            let batch = plan.batch((&lig, lp), (&sen, sp), (&lneg, &sneg), step);
            let (loss, mut grad) = batch_loss_and_grad(&model, &model.params, &graphs, &batch, config.temperature)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RetrieverError::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("loss {loss}, batch anchors {:?}", batch.linguistic.anchors),
                });
            }
            if let Some(c) = config.clip_norm {
                clip_norm(&mut grad, c);
            }
            opt.step(&mut model.params, &grad);
        }
        losses.push(eval(&model, epoch)?);
    }
    Ok(TrainOutcome {
        model,
        trace: LossTrace { losses },
        pairs,
        steps: opt.steps(),
    })
}
