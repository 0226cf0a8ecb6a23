//! Daily entity-sentiment aggregation, OHLC feature windows and an LSTM
//! next-close regressor.

mod lstm;

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, Days, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Polarity;

pub use lstm::{evaluate_forecast, train_lstm, Lstm, LstmCache, LstmTrainConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError {
    #[error("no input to aggregate")]
    EmptyInput,
    #[error("series of {n} days is too short for windows of {t}")]
    SeriesTooShort { n: usize, t: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid price bar on {date}: {reason}")]
    InvalidBar { date: NaiveDate, reason: &'static str },
    #[error("date range ends before it starts")]
    InvalidRange,
}

/// An article's publication time with the polarity of each entity it mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredArticle {
    pub timestamp: DateTime<Utc>,
    pub polarities: Vec<Polarity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapFill {
    /// Repeat the previous day's score.
    #[default]
    CarryForward,
    /// Use the neutral midpoint 0.5.
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailySentiment {
    pub date: NaiveDate,
    /// Mean entity score of the day, `None` on days without scored entities.
    pub raw: Option<f64>,
    pub normalized: f64,
}

/// Per-day mean of entity scores (+1/0/−1), min–max normalized over the
/// observed days. A degenerate range maps to 0.5. Days without entities
/// are filled per `fill`; leading gaps get 0.5.
pub fn aggregate_daily(
    articles: &[ScoredArticle],
    range: Option<(NaiveDate, NaiveDate)>,
    fill: GapFill,
) -> Result<Vec<DailySentiment>, ForecastError> {
    if articles.is_empty() {
        return Err(ForecastError::EmptyInput);
    }
    let mut sums: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for a in articles {
        let day = a.timestamp.date_naive();
        let e = sums.entry(day).or_insert((0.0, 0));
        for p in &a.polarities {
            e.0 += p.score();
            e.1 += 1;
        }
    }
    let (first, last) = match range {
        Some((a, b)) if b < a => return Err(ForecastError::InvalidRange),
        Some(r) => r,
        None => (*sums.keys().next().unwrap(), *sums.keys().next_back().unwrap()),
    };
    let raw: BTreeMap<NaiveDate, f64> = sums
        .into_iter()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(d, (s, n))| (d, s / n as f64))
        .collect();
    let in_range = raw.range(first..=last).map(|(_, v)| *v);
    let (lo, hi) = in_range.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let norm = |v: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    let mut out = Vec::new();
    let mut prev = 0.5;
    let mut day = first;
    loop {
        let r = raw.get(&day).copied();
        let normalized = match (r, fill) {
            (Some(v), _) => norm(v),
            (None, GapFill::CarryForward) => prev,
            (None, GapFill::Neutral) => 0.5,
        };
        prev = normalized;
        out.push(DailySentiment { date: day, raw: r, normalized });
        if day >= last {
            break;
        }
        day = day + Days::new(1);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl OhlcBar {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let err = |reason| Err(ForecastError::InvalidBar { date: self.date, reason });
        if [self.open, self.high, self.low, self.close].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return err("prices must be positive");
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return err("open and close must lie within [low, high]");
        }
        Ok(())
    }

    pub fn features(&self) -> [f64; 4] {
        [self.open, self.high, self.low, self.close]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Ohlc,
    /// OHLC plus the daily sentiment series (entity- or sequence-level
    /// scores; the caller decides which predictions produced it).
    OhlcSentiment,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Ohlc => 4,
            FeatureSet::OhlcSentiment => 5,
        }
    }
}

/// One row per bar; the sentiment column is the bar date's score, carrying
/// the last known score (0.5 before any) across missing dates.
pub fn join_features(bars: &[OhlcBar], sentiment: Option<&[DailySentiment]>) -> Result<Vec<Vec<f64>>, ForecastError> {
    let by_day: BTreeMap<NaiveDate, f64> = sentiment
        .unwrap_or(&[])
        .iter()
        .map(|d| (d.date, d.normalized))
        .collect();
    let mut last = 0.5;
    bars.iter()
        .map(|b| {
            b.validate()?;
            let mut row = b.features().to_vec();
            if sentiment.is_some() {
                if let Some((_, v)) = by_day.range(..=b.date).next_back() {
                    last = *v;
                }
                row.push(last);
            }
            Ok(row)
        })
        .collect()
}

/// Column-wise min–max scaling to [0, 1]; constant columns get span 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub span: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, ForecastError> {
        let d = rows.first().ok_or(ForecastError::EmptyInput)?.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in rows {
            if r.len() != d {
                return Err(ForecastError::DimensionMismatch { expected: d, got: r.len() });
            }
            for k in 0..d {
                lo[k] = lo[k].min(r[k]);
                hi[k] = hi[k].max(r[k]);
            }
        }
        let span = lo.iter().zip(&hi).map(|(a, b)| if b > a { b - a } else { 1.0 }).collect();
        Ok(Self { min: lo, span })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.min.iter().zip(&self.span)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.min.iter().zip(&self.span)).map(|(x, (m, s))| x * s + m).collect()
    }

    pub fn transform_col(&self, col: usize, x: f64) -> f64 {
        (x - self.min[col]) / self.span[col]
    }

    pub fn inverse_col(&self, col: usize, x: f64) -> f64 {
        x * self.span[col] + self.min[col]
    }
}

/// A `T × d` feature window and the next day's close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    /// Row-major `T × d`.
    pub x: Vec<f64>,
    pub y: f64,
    /// Index of the target day; the window covers the `T` days before it.
    pub target_day: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDataset {
    pub t: usize,
    pub d: usize,
    pub train: Vec<Window>,
    pub test: Vec<Window>,
    pub scaler: MinMaxScaler,
}

pub const DEFAULT_STEPS: usize = 10;
pub const CLOSE: usize = 3;

/// `N − T` chronological windows split 80/20. Features are scaled with
/// statistics from the days covered by training windows only; the target
/// is the scaled close.
pub fn build_windows(rows: &[Vec<f64>], t: usize) -> Result<WindowDataset, ForecastError> {
    let n = rows.len();
    if t == 0 || n <= t {
        return Err(ForecastError::SeriesTooShort { n, t });
    }
    let d = rows[0].len();
    let n_windows = n - t;
    let n_train = crate::math::floor(0.8 * n_windows as f64 + 1e-9) as usize;
    let fit_days = if n_train == 0 { n } else { n_train + t };
    let scaler = MinMaxScaler::fit(&rows[..fit_days])?;
    let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r)).collect();
    let mut windows: Vec<Window> = (0..n_windows)
        .map(|s| Window {
            x: scaled[s..s + t].iter().flatten().copied().collect(),
            y: scaled[s + t][CLOSE],
            target_day: s + t,
        })
        .collect();
    let test = windows.split_off(n_train);
    Ok(WindowDataset {
        t,
        d,
        train: windows,
        test,
        scaler,
    })
}
