//! Article and price ingestion for the forecasting study, and the
//! end-to-end train/evaluate driver.

use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use silc_core::corpus::Polarity;
use silc_core::forecast::{
    aggregate_daily, build_windows, evaluate_forecast, join_features, train_lstm, GapFill, Lstm, LstmTrainConfig, OhlcBar,
    ScoredArticle, DEFAULT_STEPS,
};

use crate::error::{Error, Result};
use crate::io::read_jsonl;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticlePrediction {
    pub value: String,
    pub tag: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
}

/// One line of an articles file. Other fields (id, text, ...) are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleLine {
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub predictions: Vec<ArticlePrediction>,
    /// Single document-level label, for the sequence-level feature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_label: Option<Polarity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum FeatureChoice {
    #[value(name = "ohlc")]
    #[serde(rename = "ohlc")]
    Ohlc,
    /// OHLC plus entity-level sentiment.
    #[value(name = "ohlc+els")]
    #[serde(rename = "ohlc+els")]
    OhlcEls,
    /// OHLC plus sequence-level sentiment.
    #[value(name = "ohlc+sls")]
    #[serde(rename = "ohlc+sls")]
    OhlcSls,
}

/// Entity-level articles score every predicted entity; sequence-level ones
/// contribute their single label. Articles without that signal are dropped.
pub fn score_articles(lines: &[ArticleLine], features: FeatureChoice) -> Vec<ScoredArticle> {
    lines
        .iter()
        .filter_map(|l| {
            let polarities = match features {
                FeatureChoice::Ohlc => return None,
                FeatureChoice::OhlcEls => l.predictions.iter().map(|p| p.tag).collect::<Vec<_>>(),
                FeatureChoice::OhlcSls => l.sequence_label.into_iter().collect(),
            };
            (!polarities.is_empty()).then_some(ScoredArticle {
                timestamp: l.timestamp,
                polarities,
            })
        })
        .collect()
}

pub fn load_articles(path: &Path) -> Result<Vec<ArticleLine>> {
    read_jsonl(path)
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: NaiveDate,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
}

/// Reads a `date,open,high,low,close` CSV; bars come back in date order.
pub fn load_prices(path: &Path) -> Result<Vec<OhlcBar>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut bars = Vec::new();
    for (i, row) in rdr.deserialize::<PriceRow>().enumerate() {
        let r = row.map_err(|e| Error::SchemaViolation {
            path: path.into(),
            line: i + 2,
            message: e.to_string(),
        })?;
        let bar = OhlcBar {
            date: r.date,
            open: r.open,
            high: r.high,
            low: r.low,
            close: r.close,
        };
        bar.validate().map_err(|e| Error::SchemaViolation {
            path: path.into(),
            line: i + 2,
            message: e.to_string(),
        })?;
        bars.push(bar);
    }
    bars.sort_by_key(|b| b.date);
    Ok(bars)
}

pub fn save_prices(path: &Path, bars: &[OhlcBar]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    w.write_record(["date", "open", "high", "low", "close"]).map_err(|e| Error::format(path, e))?;
    for b in bars {
        w.write_record([
            b.date.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
        ])
        .map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastOptions {
    pub features: FeatureChoice,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub fill: GapFill,
    #[serde(default)]
    pub train: LstmTrainConfig,
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl ForecastOptions {
    pub fn new(features: FeatureChoice) -> Self {
        Self {
            features,
            steps: DEFAULT_STEPS,
            fill: GapFill::default(),
            train: LstmTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub features: FeatureChoice,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_losses: Vec<f64>,
    /// Test RMSE of the normalized next-day close.
    pub rmse: f64,
}

/// Builds features, trains the LSTM on the first 80% of windows and scores
/// the rest.
pub fn run_forecast(bars: &[OhlcBar], articles: &[ArticleLine], opts: &ForecastOptions) -> Result<ForecastReport> {
    let sentiment = match opts.features {
        FeatureChoice::Ohlc => None,
        f => {
            let scored = score_articles(articles, f);
            let range = match (bars.first(), bars.last()) {
                (Some(a), Some(b)) => Some((a.date, b.date)),
                _ => None,
            };
            Some(aggregate_daily(&scored, range, opts.fill)?)
        }
    };
    let rows = join_features(bars, sentiment.as_deref())?;
    let data = build_windows(&rows, opts.steps)?;
    let model = Lstm::new(data.d, opts.train.hidden, opts.train.seed);
    let (model, train_losses) = train_lstm(model, &data.train, &opts.train)?;
    let rmse = evaluate_forecast(&model, &data.test)?;
    Ok(ForecastReport {
        features: opts.features,
        seed: opts.train.seed,
        n_train: data.train.len(),
        n_test: data.test.len(),
        train_losses,
        rmse,
    })
}
