use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, Document};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Self {
        Self { test_fraction, seed }
    }
}

/// Seeded random partition into `(train, test)` with
/// `|test| = round(fraction · n)`.
///
/// Membership depends only on the set of ids and the seed, not on input
/// order; both halves keep the input order.
pub fn split(dataset: &[Document], spec: SplitSpec) -> Result<(Vec<Document>, Vec<Document>), CorpusError> {
    let f = spec.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(CorpusError::InvalidFraction(f));
    }
    let n = dataset.len();
    let n_test = crate::math::round(f * n as f64) as usize;
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by(|&a, &b| dataset[a].id.cmp(&dataset[b].id));
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    by_id.shuffle(&mut rng);
    let mut is_test = alloc::vec![false; n];
    for &i in &by_id[..n_test] {
        is_test[i] = true;
    }
    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (doc, t) in dataset.iter().zip(is_test) {
        if t {
            test.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok((train, test))
}
