use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use silc_core::corpus::{Document, Lang, Polarity};
use silc_core::gateway::{fingerprint, format_records, parse_prediction, PredictionRecord};

use super::{Backend, Completion, GatewayError, RequestId};

/// Reply for a fingerprint miss under [`MockPolicy::Refuse`].
pub const REFUSAL: &str = "I cannot help with that request.";

/// What the mock answers when the prompt fingerprint is not in its table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MockPolicy {
    /// Gold labels from the answer key.
    EchoGold,
    /// Gold labels with `round(error_rate * n)` tuple polarities flipped,
    /// `n` counted over the whole answer key.
    Perturb { error_rate: f64, seed: u64 },
    /// Correction mock: returns gold for a seeded `fraction` of the documents
    /// whose pseudo-labels are wrong, and the pseudo-labels otherwise.
    FixPlanted { fraction: f64, seed: u64 },
    /// Correction mock that repairs a wrong tuple only when the prompt shows
    /// another record with the same value and the gold tag.
    FixWithEvidence,
    /// Returns the pseudo-labels unchanged.
    PassThrough,
    /// Always the canned refusal.
    Refuse,
}

impl MockPolicy {
    fn needs_pseudo(self) -> bool {
        matches!(self, MockPolicy::FixPlanted { .. } | MockPolicy::FixWithEvidence | MockPolicy::PassThrough)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipLogEntry {
    pub doc_id: String,
    pub index: usize,
    pub value: String,
    pub from: Polarity,
    pub to: Polarity,
}

/// Deterministic test double. A fingerprint table is consulted first, then
/// the fallback policy, which reads the document id from the request.
#[derive(Debug, Clone)]
pub struct MockBackend {
    name: String,
    lookup: BTreeMap<String, String>,
    policy: MockPolicy,
    refusal: String,
    key: BTreeMap<String, (Lang, Vec<PredictionRecord>)>,
    pseudo: BTreeMap<String, Vec<PredictionRecord>>,
    replies: BTreeMap<String, Vec<PredictionRecord>>,
    flips: Vec<FlipLogEntry>,
}

impl MockBackend {
    pub fn new(name: impl Into<String>, policy: MockPolicy) -> Self {
        Self {
            name: name.into(),
            lookup: BTreeMap::new(),
            policy,
            refusal: REFUSAL.to_string(),
            key: BTreeMap::new(),
            pseudo: BTreeMap::new(),
            replies: BTreeMap::new(),
            flips: Vec::new(),
        }
    }

    pub fn with_lookup(mut self, lookup: BTreeMap<String, String>) -> Self {
        self.lookup = lookup;
        self
    }

    /// Registers a canned reply for an exact prompt.
    pub fn with_reply(mut self, prompt: &str, reply: impl Into<String>) -> Self {
        self.lookup.insert(fingerprint(prompt), reply.into());
        self
    }

    pub fn with_refusal(mut self, text: impl Into<String>) -> Self {
        self.refusal = text.into();
        self
    }

    /// Attaches gold labels and precomputes the policy's answers.
    pub fn with_answer_key(mut self, docs: &[Document]) -> Self {
        self.key = docs
            .iter()
            .map(|d| (d.id.clone(), (d.lang, d.entities.iter().map(PredictionRecord::from).collect())))
            .collect();
        self.plan();
        self
    }

    /// Stage-1 labels for the correction policies.
    pub fn with_pseudo(mut self, pseudo: BTreeMap<String, Vec<PredictionRecord>>) -> Self {
        self.pseudo = pseudo;
        self.plan();
        self
    }

    pub fn policy(&self) -> MockPolicy {
        self.policy
    }

    /// Every polarity flip planted by [`MockPolicy::Perturb`], in doc order.
    pub fn flip_log(&self) -> &[FlipLogEntry] {
        &self.flips
    }

    fn plan(&mut self) {
        self.replies.clear();
        self.flips.clear();
        match self.policy {
            MockPolicy::EchoGold => {
                self.replies = self.key.iter().map(|(id, (_, g))| (id.clone(), g.clone())).collect();
            }
            MockPolicy::Perturb { error_rate, seed } => {
                let slots: Vec<(&String, usize)> =
                    self.key.iter().flat_map(|(id, (_, g))| (0..g.len()).map(move |i| (id, i))).collect();
                let n = ((error_rate.clamp(0.0, 1.0) * slots.len() as f64).round() as usize).min(slots.len());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut chosen: Vec<usize> = sample(&mut rng, slots.len(), n).into_vec();
                chosen.sort_unstable();
                let mut replies: BTreeMap<String, Vec<PredictionRecord>> =
                    self.key.iter().map(|(id, (_, g))| (id.clone(), g.clone())).collect();
                for k in chosen {
                    let (id, i) = slots[k];
                    let rec = &mut replies.get_mut(id).expect("slot from key")[i];
                    let others: Vec<Polarity> = Polarity::ALL.into_iter().filter(|p| *p != rec.tag).collect();
                    let to = others[rng.random_range(0..others.len())];
                    self.flips.push(FlipLogEntry {
                        doc_id: id.clone(),
                        index: i,
                        value: rec.value.clone(),
                        from: rec.tag,
                        to,
                    });
                    rec.tag = to;
                }
                self.replies = replies;
            }
            MockPolicy::FixPlanted { fraction, seed } => {
                let wrong: Vec<&String> = self
                    .pseudo
                    .iter()
                    .filter(|(id, p)| self.key.get(*id).is_some_and(|(_, g)| !same_multiset(p, g)))
                    .map(|(id, _)| id)
                    .collect();
                let n = ((fraction.clamp(0.0, 1.0) * wrong.len() as f64).round() as usize).min(wrong.len());
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let fixed: BTreeSet<&String> = sample(&mut rng, wrong.len(), n).into_iter().map(|i| wrong[i]).collect();
                for (id, p) in &self.pseudo {
                    let reply = match self.key.get(id) {
                        Some((_, g)) if fixed.contains(id) => g.clone(),
                        _ => p.clone(),
                    };
                    self.replies.insert(id.clone(), reply);
                }
            }
            MockPolicy::PassThrough => self.replies = self.pseudo.clone(),
            MockPolicy::FixWithEvidence | MockPolicy::Refuse => {}
        }
    }

    fn lang(&self, doc_id: &str) -> Lang {
        self.key.get(doc_id).map_or(Lang::En, |(l, _)| *l)
    }

    fn with_evidence(&self, prompt: &str, doc_id: &str) -> Option<Vec<PredictionRecord>> {
        let pseudo = self.pseudo.get(doc_id)?;
        let Some((_, gold)) = self.key.get(doc_id) else {
            return Some(pseudo.clone());
        };
        if same_multiset(pseudo, gold) {
            return Some(pseudo.clone());
        }
        let shown: BTreeSet<(String, Polarity)> = parse_prediction(prompt)
            .unwrap_or_default()
            .into_iter()
            .map(|r| (r.value, r.tag))
            .collect();
        let mut out = pseudo.clone();
        for r in &mut out {
            let g = gold.iter().find(|g| g.value == r.value && g.start == r.start && g.end == r.end);
            if let Some(g) = g {
                if g.tag != r.tag && shown.contains(&(g.value.clone(), g.tag)) {
                    r.tag = g.tag;
                }
            }
        }
        Some(out)
    }
}

fn same_multiset(a: &[PredictionRecord], b: &[PredictionRecord]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort();
    b.sort();
    a == b
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, request: &RequestId) -> Result<Completion, GatewayError> {
        if let Some(reply) = self.lookup.get(&fingerprint(prompt)) {
            return Ok(Completion {
                text: reply.clone(),
                attempts: 1,
            });
        }
        let id = &request.doc_id;
        let records = match self.policy {
            MockPolicy::Refuse => None,
            MockPolicy::FixWithEvidence => self.with_evidence(prompt, id),
            p if p.needs_pseudo() || self.replies.contains_key(id) => self.replies.get(id).cloned(),
            _ => None,
        };
        let text = match records {
            Some(r) => format_records(&r, self.lang(id)),
            None => self.refusal.clone(),
        };
        Ok(Completion { text, attempts: 1 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use silc_core::corpus::EntityAnnotation;
    use silc_core::gateway::Stage;

    fn docs(n: usize) -> Vec<Document> {
        (0..n)
            .map(|i| {
                Document::new(format!("d{i:02}"), "Acme rose while Bolt fell", Lang::En).with_entities(vec![
                    EntityAnnotation::new("Acme", 0, 4, Polarity::Positive),
                    EntityAnnotation::new("Bolt", 16, 20, Polarity::Negative),
                ])
            })
            .collect()
    }

    fn ask(m: &MockBackend, stage: Stage, id: &str) -> Vec<PredictionRecord> {
        parse_prediction(&m.complete("p", &RequestId::new(stage, id)).unwrap().text).unwrap()
    }

    #[test]
    fn canned_table_wins() {
        let m = MockBackend::new("m", MockPolicy::EchoGold).with_reply("hello", "canned");
        let r = m.complete("hello", &RequestId::new(Stage::Stage1, "x")).unwrap();
        assert_eq!(r.text, "canned");
    }

    #[test]
    fn miss_without_fallback_refuses() {
        let m = MockBackend::new("m", MockPolicy::Refuse).with_answer_key(&docs(2)).with_refusal("nope");
        assert_eq!(m.complete("q", &RequestId::new(Stage::Stage1, "d00")).unwrap().text, "nope");
        let m = MockBackend::new("m", MockPolicy::EchoGold);
        assert_eq!(m.complete("q", &RequestId::new(Stage::Stage1, "zz")).unwrap().text, REFUSAL);
    }

    #[test]
    fn perturb_plants_exact_count_and_logs() {
        let d = docs(10);
        let m = MockBackend::new("m", MockPolicy::Perturb { error_rate: 0.2, seed: 3 }).with_answer_key(&d);
        assert_eq!(m.flip_log().len(), 4);
        let again = MockBackend::new("m", MockPolicy::Perturb { error_rate: 0.2, seed: 3 }).with_answer_key(&d);
        assert_eq!(m.flip_log(), again.flip_log());
        let mut changed = 0;
        for doc in &d {
            let gold: Vec<PredictionRecord> = doc.entities.iter().map(PredictionRecord::from).collect();
            let got = ask(&m, Stage::Stage1, &doc.id);
            let diff = got.iter().zip(&gold).filter(|(a, b)| a != b).count();
            assert_eq!(diff, m.flip_log().iter().filter(|f| f.doc_id == doc.id).count());
            changed += diff;
        }
        assert_eq!(changed, 4);
    }

    #[test]
    fn fix_planted_repairs_requested_share() {
        let d = docs(8);
        let s1 = MockBackend::new("s1", MockPolicy::Perturb { error_rate: 0.25, seed: 1 }).with_answer_key(&d);
        let pseudo: BTreeMap<String, Vec<PredictionRecord>> =
            d.iter().map(|x| (x.id.clone(), ask(&s1, Stage::Stage1, &x.id))).collect();
        let wrong = pseudo
            .iter()
            .filter(|(id, p)| !same_multiset(p, &d.iter().find(|x| &&x.id == id).unwrap().entities.iter().map(PredictionRecord::from).collect::<Vec<_>>()))
            .count();
        let s2 = MockBackend::new("s2", MockPolicy::FixPlanted { fraction: 0.5, seed: 2 })
            .with_answer_key(&d)
            .with_pseudo(pseudo.clone());
        let still_wrong = d
            .iter()
            .filter(|x| {
                let gold: Vec<PredictionRecord> = x.entities.iter().map(PredictionRecord::from).collect();
                !same_multiset(&ask(&s2, Stage::Stage2, &x.id), &gold)
            })
            .count();
        assert_eq!(still_wrong, wrong - (wrong as f64 * 0.5).round() as usize);
        let pass = MockBackend::new("p", MockPolicy::PassThrough).with_pseudo(pseudo.clone());
        for (id, p) in &pseudo {
            assert_eq!(&ask(&pass, Stage::Stage2, id), p);
        }
    }

    #[test]
    fn evidence_policy_needs_matching_record() {
        let d = docs(1);
        let wrong = vec![
            PredictionRecord::new("Acme", 0, 4, Polarity::Neutral),
            PredictionRecord::new("Bolt", 16, 20, Polarity::Negative),
        ];
        let m = MockBackend::new("e", MockPolicy::FixWithEvidence)
            .with_answer_key(&d)
            .with_pseudo([("d00".to_string(), wrong.clone())].into());
        let rid = RequestId::new(Stage::Stage2, "d00");
        let bare = m.complete("nothing relevant", &rid).unwrap().text;
        assert_eq!(parse_prediction(&bare).unwrap(), wrong);
        let shown = "Example 1\n{value: Acme, start: 9, end: 13, tag: Positive}\n";
        let fixed = parse_prediction(&m.complete(shown, &rid).unwrap().text).unwrap();
        assert_eq!(fixed[0].tag, Polarity::Positive);
    }
}
