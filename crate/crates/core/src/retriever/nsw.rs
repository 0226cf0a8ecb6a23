use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};

use super::index::{rank, ExactIndex, Hit, ReprChannel, VectorIndex};
use crate::math::dot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NswParams {
    /// Links added per inserted node.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
}

impl Default for NswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 100,
            ef_search: 64,
        }
    }
}

/// Score with a deterministic total order (higher score, then lower node).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, usize);

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Graph {
    links: Vec<Vec<usize>>,
}

/// Approximate search over a navigable small-world graph per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NswIndex {
    pub params: NswParams,
    exact: ExactIndex,
    graphs: Vec<Graph>,
}

fn vec_of(exact: &ExactIndex, c: ReprChannel, i: usize) -> &[f64] {
    c.of(&exact.examples[i])
}

/// Best-first beam search; returns up to `ef` nodes, best first.
fn beam(exact: &ExactIndex, c: ReprChannel, links: &[Vec<usize>], query: &[f64], entry: usize, ef: usize) -> Vec<Scored> {
    let mut visited = BTreeSet::new();
    visited.insert(entry);
    let s0 = Scored(dot(query, vec_of(exact, c, entry)), entry);
    let mut frontier = BinaryHeap::from([s0]);
    let mut found: BinaryHeap<Reverse<Scored>> = BinaryHeap::from([Reverse(s0)]);
    while let Some(cur) = frontier.pop() {
        if found.len() >= ef && cur < found.peek().unwrap().0 {
            break;
        }
        for &nb in &links[cur.1] {
            if !visited.insert(nb) {
                continue;
            }
            let s = Scored(dot(query, vec_of(exact, c, nb)), nb);
            if found.len() < ef || s > found.peek().unwrap().0 {
                frontier.push(s);
                found.push(Reverse(s));
                if found.len() > ef {
                    found.pop();
                }
            }
        }
    }
    let mut out: Vec<Scored> = found.into_iter().map(|r| r.0).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}

impl NswIndex {
    pub fn build(exact: ExactIndex, params: NswParams) -> Self {
        let n = exact.examples.len();
        let max_links = 2 * params.m;
        let graphs = ReprChannel::ALL
            .iter()
            .map(|&c| {
                let mut links: Vec<Vec<usize>> = vec![Vec::new(); n];
                for i in 1..n {
                    let q = vec_of(&exact, c, i);
                    let near = beam(&exact, c, &links[..i], q, 0, params.ef_construction.max(params.m));
                    for s in near.iter().take(params.m) {
                        links[i].push(s.1);
                        links[s.1].push(i);
                        if links[s.1].len() > max_links {
                            let base = vec_of(&exact, c, s.1);
                            let mut ranked: Vec<Scored> =
                                links[s.1].iter().map(|&j| Scored(dot(base, vec_of(&exact, c, j)), j)).collect();
                            ranked.sort_by(|a, b| b.cmp(a));
                            links[s.1] = ranked.iter().take(max_links).map(|s| s.1).collect();
                        }
                    }
                }
                Graph { links }
            })
            .collect();
        Self { params, exact, graphs }
    }
}

impl VectorIndex for NswIndex {
    fn model_version(&self) -> &str {
        &self.exact.model_version
    }

    fn len(&self) -> usize {
        self.exact.examples.len()
    }

    fn search(&self, channel: ReprChannel, query: &[f64], m: usize, exclude: Option<&str>) -> Vec<Hit> {
        if self.exact.examples.is_empty() {
            return Vec::new();
        }
        let gi = ReprChannel::ALL.iter().position(|c| *c == channel).unwrap();
        let ef = self.params.ef_search.max(m + 1);
        let found = beam(&self.exact, channel, &self.graphs[gi].links, query, 0, ef);
        let mut hits: Vec<Hit> = found
            .into_iter()
            .map(|s| Hit {
                id: self.exact.examples[s.1].doc_id.clone(),
                score: s.0,
            })
            .filter(|h| Some(h.id.as_str()) != exclude)
            .collect();
        hits.sort_by(|a, b| rank((&a.id, a.score), (&b.id, b.score)));
        hits.truncate(m);
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retriever::EncodedExample;
    use alloc::format;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_index(n: usize, d: usize, seed: u64) -> ExactIndex {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = || {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            crate::math::normalized(&v)
        };
        ExactIndex {
            model_version: "v".into(),
            examples: (0..n)
                .map(|i| EncodedExample {
                    doc_id: format!("d{i:04}"),
                    h_lig: unit(),
                    h_sen: unit(),
                    h_avg: unit(),
                })
                .collect(),
        }
    }

    #[test]
    fn agrees_with_exact_scan() {
        let exact = random_index(300, 8, 1);
        let nsw = NswIndex::build(exact.clone(), NswParams::default());
        let queries = random_index(50, 8, 2);
        let mut agree = 0;
        for q in &queries.examples {
            for c in ReprChannel::ALL {
                if nsw.search(c, c.of(q), 1, None)[0].id == exact.search(c, c.of(q), 1, None)[0].id {
                    agree += 1;
                }
            }
        }
        assert!(agree >= 148, "agreement {agree}/150");
    }

    #[test]
    fn stored_vector_is_its_own_top_hit() {
        let exact = random_index(100, 6, 3);
        let nsw = NswIndex::build(exact.clone(), NswParams::default());
        for e in &exact.examples[..20] {
            assert_eq!(nsw.search(ReprChannel::Sentiment, &e.h_sen, 1, None)[0].id, e.doc_id);
            assert_ne!(nsw.search(ReprChannel::Sentiment, &e.h_sen, 1, Some(&e.doc_id))[0].id, e.doc_id);
        }
    }
}
