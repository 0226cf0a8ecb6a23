use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityAnnotation, Lang, Polarity};

/// Text emitted for an empty prediction.
pub const NO_ENTITIES: &str = "no entities";

/// One `(value, start, end, tag)` tuple as produced by a model.
///
/// Only syntactic completeness is guaranteed; offsets may not match the
/// source text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub value: String,
    pub start: usize,
    pub end: usize,
    pub tag: Polarity,
}

impl PredictionRecord {
    pub fn new(value: impl Into<String>, start: usize, end: usize, tag: Polarity) -> Self {
        Self {
            value: value.into(),
            start,
            end,
            tag,
        }
    }
}

impl From<&EntityAnnotation> for PredictionRecord {
    fn from(e: &EntityAnnotation) -> Self {
        Self::new(e.value.clone(), e.start, e.end, e.sentiment)
    }
}

impl From<PredictionRecord> for EntityAnnotation {
    fn from(r: PredictionRecord) -> Self {
        EntityAnnotation::new(r.value, r.start, r.end, r.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("model output mentions records but none could be extracted: {snippet:?}")]
    ParseFailure { snippet: String },
}

/// Serializes records in the canonical brace format, one per line.
///
/// Chinese output uses Chinese polarity names. An empty list becomes
/// [`NO_ENTITIES`].
pub fn format_records(records: &[PredictionRecord], lang: Lang) -> String {
    if records.is_empty() {
        return String::from(NO_ENTITIES);
    }
    let mut out = String::new();
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let tag = match lang {
            Lang::En => r.tag.name(),
            Lang::Zh => r.tag.name_zh(),
        };
        let _ = write!(out, "{{value: {}, start: {}, end: {}, tag: {}}}", r.value, r.start, r.end, tag);
    }
    out
}

#[derive(Deserialize)]
struct JsonRecord {
    value: String,
    start: usize,
    end: usize,
    #[serde(alias = "sentiment", alias = "label", alias = "polarity")]
    tag: String,
}

impl JsonRecord {
    fn into_record(self) -> Option<PredictionRecord> {
        let tag = Polarity::from_label(&self.tag)?;
        Some(PredictionRecord::new(self.value, self.start, self.end, tag))
    }
}

/// Extracts prediction records from free model text.
///
/// Accepts a JSON list of objects or the brace line format
/// `{value: X, start: N, end: M, tag: T}`; tags may be English or Chinese.
/// Text that never mentions a `value` field parses as an empty prediction.
/// Values must not contain `}` or the sequence `, start:`.
pub fn parse_prediction(raw: &str) -> Result<Vec<PredictionRecord>, ParseError> {
    if !contains_ignore_ascii_case(raw, "value") {
        return Ok(Vec::new());
    }
    if let Some(records) = parse_json_list(raw) {
        return Ok(records);
    }
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else { break };
        let segment = &after[..close];
        if let Some(r) = parse_json_object(segment).or_else(|| parse_brace_segment(segment)) {
            out.push(r);
        }
        rest = &after[close + 1..];
    }
    if out.is_empty() {
        let snippet: String = raw.chars().take(80).collect();
        return Err(ParseError::ParseFailure { snippet });
    }
    Ok(out)
}

fn parse_json_list(raw: &str) -> Option<Vec<PredictionRecord>> {
    let open = raw.find('[')?;
    let close = raw.rfind(']')?;
    if close < open {
        return None;
    }
    let items: Vec<JsonRecord> = serde_json::from_str(&raw[open..=close]).ok()?;
    items.into_iter().map(JsonRecord::into_record).collect()
}

fn parse_json_object(segment: &str) -> Option<PredictionRecord> {
    if !segment.trim_start().starts_with('"') {
        return None;
    }
    let mut s = String::with_capacity(segment.len() + 2);
    s.push('{');
    s.push_str(segment);
    s.push('}');
    serde_json::from_str::<JsonRecord>(&s).ok()?.into_record()
}

fn parse_brace_segment(segment: &str) -> Option<PredictionRecord> {
    let s = segment.trim_start();
    let s = strip_key(s, "value")?;
    let s = s.strip_prefix(' ').unwrap_or(s);
    for (comma, _) in s.match_indices(',') {
        if let Some((start, end, tag)) = parse_tail(&s[comma + 1..]) {
            return Some(PredictionRecord::new(&s[..comma], start, end, tag));
        }
    }
    None
}

/// Parses `start: N, end: M, tag: T` with flexible spacing.
fn parse_tail(s: &str) -> Option<(usize, usize, Polarity)> {
    let s = strip_key(s.trim_start(), "start")?;
    let (start, s) = take_int(s)?;
    let s = s.trim_start().strip_prefix(',')?;
    let s = strip_key(s.trim_start(), "end")?;
    let (end, s) = take_int(s)?;
    let s = s.trim_start().strip_prefix(',')?;
    let s = strip_key(s.trim_start(), "tag")?;
    let tag = s.trim().trim_matches(|c| c == '"' || c == '\'');
    Some((start, end, Polarity::from_label(tag)?))
}

/// Strips `key` (ASCII case-insensitive, optionally quoted) followed by `:`.
fn strip_key<'a>(s: &'a str, key: &str) -> Option<&'a str> {
    let s = s.strip_prefix(['"', '\'']).unwrap_or(s);
    if s.len() < key.len() || !s.is_char_boundary(key.len()) || !s[..key.len()].eq_ignore_ascii_case(key) {
        return None;
    }
    let s = &s[key.len()..];
    let s = s.strip_prefix(['"', '\'']).unwrap_or(s);
    s.trim_start().strip_prefix(':')
}

fn take_int(s: &str) -> Option<(usize, &str)> {
    let s = s.trim_start();
    let s = s.strip_prefix(['"', '\'']).unwrap_or(s);
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n = s[..digits].parse().ok()?;
    let rest = &s[digits..];
    Some((n, rest.strip_prefix(['"', '\'']).unwrap_or(rest)))
}

fn contains_ignore_ascii_case(hay: &str, needle: &str) -> bool {
    hay.as_bytes()
        .windows(needle.len())
        .any(|w| w.eq_ignore_ascii_case(needle.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn brace_format_from_case_study() {
        let got = parse_prediction("{value: Twitter Inc, start: 20, end: 31, tag: Positive}").unwrap();
        assert_eq!(got, vec![PredictionRecord::new("Twitter Inc", 20, 31, Polarity::Positive)]);
    }

    #[test]
    fn chinese_tag() {
        let got = parse_prediction("{value: 荣联科技, start: 5, end: 9, tag: 负面}").unwrap();
        assert_eq!(got, vec![PredictionRecord::new("荣联科技", 5, 9, Polarity::Negative)]);
    }

    #[test]
    fn no_entities_is_empty() {
        assert_eq!(parse_prediction("no entities").unwrap(), vec![]);
        assert_eq!(parse_prediction("").unwrap(), vec![]);
    }

    #[test]
    fn multiple_records_with_prose() {
        let raw = "Corrected labels:\n{value: Twitter Inc, start: 20, end: 31, tag: Positive}\n\
                   {value: Tesla Inc, start: 149, end: 158, tag: neutral}\nDone.";
        let got = parse_prediction(raw).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1], PredictionRecord::new("Tesla Inc", 149, 158, Polarity::Neutral));
    }

    #[test]
    fn value_with_commas() {
        let got = parse_prediction("{value: Apple, Inc., start: 0, end: 11, tag: Positive}").unwrap();
        assert_eq!(got[0].value, "Apple, Inc.");
    }

    #[test]
    fn json_list_and_objects() {
        let raw = r#"Output: [{"value": "Rupiah", "start": 0, "end": 6, "tag": "negative"}]"#;
        assert_eq!(
            parse_prediction(raw).unwrap(),
            vec![PredictionRecord::new("Rupiah", 0, 6, Polarity::Negative)]
        );
        let raw = r#"{"value": "A", "start": 1, "end": 2, "sentiment": "正面"} and {"value": "B", "start": 3, "end": 4, "tag": "Neutral"}"#;
        assert_eq!(parse_prediction(raw).unwrap().len(), 2);
    }

    #[test]
    fn claimed_but_broken_is_failure() {
        assert!(matches!(
            parse_prediction("{value: X, start: ?, end: 3, tag: Positive}"),
            Err(ParseError::ParseFailure { .. })
        ));
        assert!(parse_prediction("{value: X, start: 1, end: 3, tag: mixed}").is_err());
    }

    #[test]
    fn format_round_trips_both_languages() {
        let recs = vec![
            PredictionRecord::new("荣联科技", 5, 9, Polarity::Negative),
            PredictionRecord::new(" spaced ", 120, 128, Polarity::Neutral),
        ];
        for lang in [Lang::En, Lang::Zh] {
            assert_eq!(parse_prediction(&format_records(&recs, lang)).unwrap(), recs);
        }
        assert_eq!(format_records(&[], Lang::En), NO_ENTITIES);
        assert_eq!(
            format_records(&recs[..1], Lang::Zh),
            "{value: 荣联科技, start: 5, end: 9, tag: 负面}"
        );
    }
}
