//! Seeded synthetic data: a clustered entity-sentiment corpus and a price
//! series driven by lagged daily sentiment.

use chrono::{Days, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use silc_core::corpus::{Document, EntityAnnotation, Lang, Polarity};
use silc_core::forecast::OhlcBar;

use crate::forecast_io::{ArticleLine, ArticlePrediction};

const PREFIX: [&str; 12] = [
    "Acme", "Bolt", "Cobalt", "Delta", "Ember", "Falcon", "Granite", "Harbor", "Ion", "Juniper", "Keystone", "Lumen",
];
const SUFFIX: [&str; 4] = ["Corp", "Holdings", "Group", "Bank"];
const TOPICS: [&str; 8] = [
    "after quarterly earnings",
    "on merger talk",
    "amid rate worries",
    "following a product recall",
    "as regulators opened a probe",
    "after a dividend increase",
    "on currency swings",
    "ahead of the annual meeting",
];

fn verb(p: Polarity, rng: &mut ChaCha8Rng) -> &'static str {
    let pool: &[&str] = match p {
        Polarity::Positive => &["rallied strongly", "jumped to a record", "gained sharply", "surged higher"],
        Polarity::Negative => &["slumped badly", "fell to a low", "dropped sharply", "tumbled lower"],
        Polarity::Neutral => &["was unchanged", "held steady", "traded flat", "stayed level"],
    };
    pool[rng.random_range(0..pool.len())]
}

/// `n` English documents in `clusters` groups. Each group has two entities
/// with fixed polarities and a fixed topic, so same-group documents are
/// similar on both the linguistic and the sentiment side.
pub fn clustered_corpus(n: usize, clusters: usize, seed: u64) -> Vec<Document> {
    let clusters = clusters.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<(String, Polarity, String, Polarity, &str)> = (0..clusters)
        .map(|k| {
            let a = format!("{} {}", PREFIX[k % PREFIX.len()], SUFFIX[(k / PREFIX.len()) % SUFFIX.len()]);
            let b = format!("{} {}", PREFIX[(k + 5) % PREFIX.len()], SUFFIX[(k / PREFIX.len() + 1) % SUFFIX.len()]);
            let pa = Polarity::ALL[k % 3];
            let pb = Polarity::ALL[(k + 1 + k / 3) % 3];
            (a, pa, b, pb, TOPICS[k % TOPICS.len()])
        })
        .collect();
    (0..n)
        .map(|i| {
            let (a, pa, b, pb, topic) = &groups[i % clusters];
            let mut text = String::new();
            let mut ents = Vec::new();
            let mut push_entity = |text: &mut String, value: &str, p: Polarity| {
                let start = text.chars().count();
                text.push_str(value);
                ents.push(EntityAnnotation::new(value, start, start + value.chars().count(), p));
            };
            push_entity(&mut text, a, *pa);
            text.push(' ');
            text.push_str(verb(*pa, &mut rng));
            text.push(' ');
            text.push_str(topic);
            if rng.random_bool(0.7) {
                text.push_str(", while ");
                push_entity(&mut text, b, *pb);
                text.push(' ');
                text.push_str(verb(*pb, &mut rng));
            }
            text.push('.');
            Document::new(format!("syn-{i:04}"), text, Lang::En).with_entities(ents)
        })
        .collect()
}

/// A mean-reverting close series whose next-day move depends on the
/// previous day's normalized sentiment, plus the articles carrying that
/// sentiment (entity predictions and a sequence label).
pub fn sentiment_market(days: usize, seed: u64) -> (Vec<OhlcBar>, Vec<ArticleLine>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date");
    let per_day = 4;
    let mut bars = Vec::with_capacity(days);
    let mut articles = Vec::with_capacity(days * per_day);
    let mut close: f64 = 100.0;
    let mut s_prev = 0.5;
    for d in 0..days {
        let date = start + Days::new(d as u64);
        // The first two days pin the raw range to [-1, 1].
        let q = match d {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        };
        let mut pos = 0usize;
        for j in 0..per_day {
            let positive = match d {
                0 => false,
                1 => true,
                _ => rng.random_bool(q),
            };
            pos += positive as usize;
            let tag = if positive { Polarity::Positive } else { Polarity::Negative };
            let ts = Utc.from_utc_datetime(&date.and_hms_opt(9 + j as u32, 0, 0).expect("valid time"));
            articles.push(ArticleLine {
                timestamp: ts,
                predictions: vec![ArticlePrediction {
                    value: "Bitcoin".into(),
                    tag,
                    start: None,
                    end: None,
                }],
                sequence_label: Some(Polarity::Neutral),
            });
        }
        let s = pos as f64 / per_day as f64;
        let noise: f64 = StandardNormal.sample(&mut rng);
        let open = close;
        close = 100.0 + 0.6 * (close - 100.0) + 8.0 * (s_prev - 0.5) + 0.5 * noise;
        let wick: f64 = rng.random::<f64>() * 0.5;
        bars.push(OhlcBar {
            date,
            open,
            high: open.max(close) + wick,
            low: open.min(close) - wick,
            close,
        });
        s_prev = s;
    }
    (bars, articles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use silc_core::corpus::validate_dataset;
    use silc_core::forecast::{aggregate_daily, GapFill};

    #[test]
    fn corpus_spans_are_valid_and_seeded() {
        let docs = clustered_corpus(60, 12, 4);
        validate_dataset(&docs).unwrap();
        for d in &docs {
            d.validate().unwrap();
        }
        assert_eq!(docs, clustered_corpus(60, 12, 4));
        assert_ne!(docs, clustered_corpus(60, 12, 5));
    }

    #[test]
    fn market_sentiment_normalizes_to_share_of_positive() {
        let (bars, arts) = sentiment_market(30, 1);
        assert_eq!(bars.len(), 30);
        for b in &bars {
            b.validate().unwrap();
        }
        let scored = crate::forecast_io::score_articles(&arts, crate::forecast_io::FeatureChoice::OhlcEls);
        let daily = aggregate_daily(&scored, None, GapFill::CarryForward).unwrap();
        assert_eq!(daily[0].normalized, 0.0);
        assert_eq!(daily[1].normalized, 1.0);
        for (d, day) in daily.iter().enumerate() {
            let pos = arts[d * 4..d * 4 + 4].iter().filter(|a| a.predictions[0].tag == Polarity::Positive).count();
            assert!((day.normalized - pos as f64 / 4.0).abs() < 1e-12);
        }
    }
}
