use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{RetrieverError, SimilarityFeatures, SimilarityRules, TrainedChannel};

/// Positive and negative index pairs `(i, j)` with `i < j` for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelPairs {
    pub threshold: f64,
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSets {
    pub linguistic: ChannelPairs,
    pub sentiment: ChannelPairs,
}

impl PairSets {
    pub fn channel(&self, c: TrainedChannel) -> &ChannelPairs {
        match c {
            TrainedChannel::Linguistic => &self.linguistic,
            TrainedChannel::Sentiment => &self.sentiment,
        }
    }
}

struct Reservoir {
    cap: usize,
    seen: usize,
    items: Vec<(usize, usize)>,
}

impl Reservoir {
    fn new(cap: usize) -> Self {
        Self { cap, seen: 0, items: Vec::new() }
    }

    fn offer(&mut self, pair: (usize, usize), rng: &mut ChaCha8Rng) {
        self.seen += 1;
        if self.items.len() < self.cap {
            self.items.push(pair);
        } else {
            let k = rng.random_range(0..self.seen);
            if k < self.cap {
                self.items[k] = pair;
            }
        }
    }
}

fn finish(threshold: f64, pos: Reservoir, neg: Reservoir, rng: &mut ChaCha8Rng) -> ChannelPairs {
    let mut positives = pos.items;
    let mut negatives = neg.items;
    negatives.shuffle(rng);
    negatives.truncate(positives.len());
    positives.sort_unstable();
    negatives.sort_unstable();
    ChannelPairs { threshold, positives, negatives }
}

/// Mines rule-based training pairs over all `i < j`. Pairs with similarity
/// at or above the channel threshold are positives (uniformly subsampled to
/// at most `max_pairs`); negatives are an equally sized uniform sample of the
/// remaining pairs.
pub fn make_pairs(
    features: &[SimilarityFeatures],
    rules: SimilarityRules,
    max_pairs: usize,
    seed: u64,
) -> Result<PairSets, RetrieverError> {
    let n = features.len();
    if n < 2 {
        return Err(RetrieverError::TooFewDocuments(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lig = (Reservoir::new(max_pairs), Reservoir::new(max_pairs));
    let mut sen = (Reservoir::new(max_pairs), Reservoir::new(max_pairs));
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&features[i], &features[j]);
            if a.linguistic(b) >= rules.theta_lig {
                lig.0.offer((i, j), &mut rng);
            } else {
                lig.1.offer((i, j), &mut rng);
            }
            if a.sentiment(b) >= rules.theta_sen {
                sen.0.offer((i, j), &mut rng);
            } else {
                sen.1.offer((i, j), &mut rng);
            }
        }
    }
    if lig.0.items.is_empty() {
        return Err(RetrieverError::InsufficientPairs {
            channel: TrainedChannel::Linguistic,
            threshold: rules.theta_lig,
        });
    }
    if sen.0.items.is_empty() {
        return Err(RetrieverError::InsufficientPairs {
            channel: TrainedChannel::Sentiment,
            threshold: rules.theta_sen,
        });
    }
    Ok(PairSets {
        linguistic: finish(rules.theta_lig, lig.0, lig.1, &mut rng),
        sentiment: finish(rules.theta_sen, sen.0, sen.1, &mut rng),
    })
}
