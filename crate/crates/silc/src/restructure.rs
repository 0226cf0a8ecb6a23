//! Readers that turn the public source datasets into span-annotated
//! documents.
//!
//! * `finentity`: JSON list of `{content, annotations: [{start, end, label, value}]}`.
//! * `sentfin`: CSV with a `Title` column and a `Decisive Ngram` column holding
//!   a Python-style dict of entity → polarity.
//! * `efsa`: JSON or JSONL event tuples (company … sentiment) per article.
//!   Articles where one company carries more than one polarity are skipped;
//!   event fields are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use serde_json::Value;
use silc_core::corpus::{align_spans, char_slice, CorpusError, Document, EntityAnnotation, Lang, Polarity};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    Finentity,
    Sentfin,
    Efsa,
}

/// Whether each listed entity is annotated once or at every occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occurrences {
    First,
    #[default]
    All,
}

/// First-seen position, text and (company, sentiment) tuples of one article.
type Article = (usize, String, Vec<(String, String)>);

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct RestructureReport {
    pub records_read: usize,
    pub documents: usize,
    pub dropped_entities: usize,
    pub skipped_records: usize,
}

pub fn restructure(path: &Path, format: SourceFormat, occ: Occurrences) -> Result<(Vec<Document>, RestructureReport)> {
    match format {
        SourceFormat::Finentity => read_finentity(path),
        SourceFormat::Sentfin => read_sentfin(path, occ),
        SourceFormat::Efsa => read_efsa(path, occ),
    }
}

fn count_occurrences(text: &[char], needle: &[char], fold: bool) -> usize {
    if needle.is_empty() || needle.len() > text.len() {
        return 0;
    }
    let eq = |a: char, b: char| a == b || (fold && a.to_lowercase().eq(b.to_lowercase()));
    let mut n = 0;
    let mut i = 0;
    while i + needle.len() <= text.len() {
        if text[i..i + needle.len()].iter().zip(needle).all(|(a, b)| eq(*a, *b)) {
            n += 1;
            i += needle.len();
        } else {
            i += 1;
        }
    }
    n
}

/// Aligns values to spans, dropping (and logging) any that cannot be placed.
pub fn align_lenient(id: &str, text: &str, lang: Lang, values: &[(String, Polarity)], occ: Occurrences) -> (Vec<EntityAnnotation>, usize) {
    let chars: Vec<char> = text.chars().collect();
    let mut wanted: Vec<(String, Polarity)> = Vec::new();
    for (v, p) in values {
        let copies = match occ {
            Occurrences::First => 1,
            Occurrences::All => {
                let needle: Vec<char> = v.chars().collect();
                count_occurrences(&chars, &needle, lang == Lang::En).max(1)
            }
        };
        wanted.extend(std::iter::repeat_n((v.clone(), *p), copies));
    }
    loop {
        match align_spans(text, lang, &wanted) {
            Ok(a) => {
                let dropped = values
                    .iter()
                    .filter(|(v, _)| !a.iter().any(|e| e.value.eq_ignore_ascii_case(v) || e.value == *v))
                    .count();
                return (a, dropped);
            }
            Err(CorpusError::UnalignableEntity { value }) => {
                let pos = wanted.iter().rposition(|(v, _)| *v == value).expect("failing value is listed");
                wanted.remove(pos);
                if !wanted.iter().any(|(v, _)| *v == value) {
                    warn!("{id}: dropping unalignable entity {value:?}");
                }
            }
            Err(e) => unreachable!("alignment only reports unalignable entities: {e}"),
        }
    }
}

fn polarity(label: &str, path: &Path, what: &str) -> Result<Polarity> {
    Polarity::from_label(label.trim()).ok_or_else(|| Error::format(path, format!("{what}: unknown polarity {label:?}")))
}

fn read_finentity(path: &Path) -> Result<(Vec<Document>, RestructureReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let items: Vec<Value> = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
    let mut report = RestructureReport {
        records_read: items.len(),
        ..Default::default()
    };
    let mut docs = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let content = first_str(item, &["content", "text"]).ok_or_else(|| Error::format(path, format!("record {i}: no content")))?;
        let id = format!("finentity-{i:05}");
        let mut ents = Vec::new();
        let mut fallback = Vec::new();
        for a in item.get("annotations").and_then(Value::as_array).into_iter().flatten() {
            let value = first_str(a, &["value", "entity", "text"]).unwrap_or_default();
            let label = first_str(a, &["label", "tag", "sentiment"]).unwrap_or_default();
            let p = polarity(&label, path, &id)?;
            let start = a.get("start").and_then(Value::as_u64).map(|v| v as usize);
            let end = a.get("end").and_then(Value::as_u64).map(|v| v as usize);
            match (start, end) {
                (Some(s), Some(e)) if char_slice(&content, s, e) == Some(value.as_str()) => {
                    ents.push(EntityAnnotation::new(value, s, e, p));
                }
                _ => fallback.push((value, p)),
            }
        }
        if !fallback.is_empty() {
            // offsets that disagree with the text: place by surface form instead
            let (placed, dropped) = align_lenient(&id, &content, Lang::En, &fallback, Occurrences::First);
            report.dropped_entities += dropped;
            for e in placed {
                if ents.iter().all(|x: &EntityAnnotation| !x.overlaps(&e)) {
                    ents.push(e);
                } else {
                    report.dropped_entities += 1;
                }
            }
        }
        docs.push(Document::new(id, content, Lang::En).with_entities(ents));
    }
    report.documents = docs.len();
    Ok((docs, report))
}

/// Parses `{'a': 'positive', "b": "neutral"}` into ordered pairs.
pub fn parse_py_dict(s: &str) -> Option<Vec<(String, String)>> {
    let mut chars = s.trim().chars().peekable();
    if chars.next()? != '{' {
        return None;
    }
    let mut out = Vec::new();
    let read_str = |chars: &mut std::iter::Peekable<std::str::Chars>| -> Option<String> {
        while chars.peek()?.is_whitespace() {
            chars.next();
        }
        let q = chars.next()?;
        if q != '\'' && q != '"' {
            return None;
        }
        let mut v = String::new();
        loop {
            match chars.next()? {
                '\\' => v.push(chars.next()?),
                c if c == q => return Some(v),
                c => v.push(c),
            }
        }
    };
    loop {
        while chars.peek()?.is_whitespace() || *chars.peek()? == ',' {
            chars.next();
        }
        if *chars.peek()? == '}' {
            return Some(out);
        }
        let k = read_str(&mut chars)?;
        while chars.peek()?.is_whitespace() {
            chars.next();
        }
        if chars.next()? != ':' {
            return None;
        }
        let v = read_str(&mut chars)?;
        out.push((k, v));
    }
}

fn read_sentfin(path: &Path, occ: Occurrences) -> Result<(Vec<Document>, RestructureReport)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
    let headers = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)));
    let title = col(&["Title", "text"]).ok_or_else(|| Error::format(path, "missing Title column"))?;
    let ngram = col(&["Decisive Ngram", "Decisive_Ngram", "entities"]).ok_or_else(|| Error::format(path, "missing Decisive Ngram column"))?;
    let sno = col(&["S No.", "S No", "id"]);
    let mut report = RestructureReport::default();
    let mut docs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e))?;
        report.records_read += 1;
        let text = rec.get(title).unwrap_or_default().to_string();
        let id = match sno.and_then(|c| rec.get(c)) {
            Some(s) if !s.trim().is_empty() => format!("sentfin-{}", s.trim()),
            _ => format!("sentfin-{i:05}"),
        };
        let Some(pairs) = parse_py_dict(rec.get(ngram).unwrap_or_default()) else {
            warn!("{id}: unparseable entity column, record skipped");
            report.skipped_records += 1;
            continue;
        };
        let values = pairs
            .into_iter()
            .map(|(k, v)| Ok((k, polarity(&v, path, &id)?)))
            .collect::<Result<Vec<_>>>()?;
        let (ents, dropped) = align_lenient(&id, &text, Lang::En, &values, occ);
        report.dropped_entities += dropped;
        docs.push(Document::new(id, text, Lang::En).with_entities(ents));
    }
    report.documents = docs.len();
    Ok((docs, report))
}

fn first_str(v: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str)).map(str::to_string)
}

fn efsa_tuples(item: &Value) -> Vec<(String, String)> {
    const COMPANY: [&str; 6] = ["company", "Company", "entity", "Entity", "value", "name"];
    const SENT: [&str; 6] = ["sentiment", "Sentiment", "polarity", "Polarity", "tag", "label"];
    let from_obj = |t: &Value| -> Option<(String, String)> {
        match t {
            Value::Object(_) => Some((first_str(t, &COMPANY)?, first_str(t, &SENT)?)),
            Value::Array(a) if a.len() >= 2 => Some((a.first()?.as_str()?.to_string(), a.last()?.as_str()?.to_string())),
            _ => None,
        }
    };
    for key in ["labels", "tuples", "five_tuples", "events", "entities", "label"] {
        if let Some(list) = item.get(key).and_then(Value::as_array) {
            return list.iter().filter_map(from_obj).collect();
        }
    }
    from_obj(item).into_iter().collect()
}

fn read_efsa(path: &Path, occ: Occurrences) -> Result<(Vec<Document>, RestructureReport)> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let items: Vec<Value> = match serde_json::from_str::<Value>(&raw) {
        Ok(Value::Array(a)) => a,
        Ok(v @ Value::Object(_)) => vec![v],
        _ => raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::SchemaViolation { path: path.into(), line: i + 1, message: e.to_string() }))
            .collect::<Result<_>>()?,
    };
    let mut report = RestructureReport {
        records_read: items.len(),
        ..Default::default()
    };
    // Rows may repeat an article once per tuple; merge by id (or text).
    let mut articles: BTreeMap<String, Article> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let text = first_str(item, &["text", "content", "news", "News", "Content"]).ok_or_else(|| Error::format(path, format!("record {i}: no text")))?;
        let key = item
            .get("id")
            .or_else(|| item.get("ID"))
            .map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()))
            .unwrap_or_else(|| text.clone());
        let first = articles.len();
        let entry = articles.entry(key).or_insert_with(|| (first, text, Vec::new()));
        entry.2.extend(efsa_tuples(item));
    }
    let mut ordered: Vec<(String, Article)> = articles.into_iter().collect();
    ordered.sort_by_key(|(_, (pos, _, _))| *pos);
    let mut docs = Vec::new();
    for (key, (pos, text, tuples)) in ordered {
        let id = if key == text { format!("efsa-{pos:05}") } else { format!("efsa-{key}") };
        let mut per_company: Vec<(String, Polarity)> = Vec::new();
        let mut mixed = false;
        for (c, s) in tuples {
            let p = polarity(&s, path, &id)?;
            match per_company.iter().find(|(x, _)| *x == c) {
                Some((_, q)) if *q != p => mixed = true,
                Some(_) => {}
                None => per_company.push((c, p)),
            }
        }
        if mixed || per_company.is_empty() {
            report.skipped_records += 1;
            continue;
        }
        let (ents, dropped) = align_lenient(&id, &text, Lang::Zh, &per_company, occ);
        report.dropped_entities += dropped;
        docs.push(Document::new(id, text, Lang::Zh).with_entities(ents));
    }
    report.documents = docs.len();
    Ok((docs, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_dicts() {
        assert_eq!(
            parse_py_dict(r#"{'SEBI': 'neutral', "Reliance's": "positive"}"#).unwrap(),
            vec![("SEBI".into(), "neutral".into()), ("Reliance's".into(), "positive".into())]
        );
        assert_eq!(parse_py_dict("{}").unwrap(), vec![]);
        assert!(parse_py_dict("SEBI: neutral").is_none());
        assert_eq!(parse_py_dict(r"{'a\'b': 'x'}").unwrap()[0].0, "a'b");
    }

    #[test]
    fn lenient_alignment_drops_missing_and_repeats() {
        let (a, dropped) = align_lenient(
            "t",
            "荣联科技公告称荣联科技将回购",
            Lang::Zh,
            &[("荣联科技".into(), Polarity::Negative), ("不存在".into(), Polarity::Positive)],
            Occurrences::All,
        );
        assert_eq!(dropped, 1);
        assert_eq!(a.iter().map(|e| (e.start, e.end)).collect::<Vec<_>>(), vec![(0, 4), (7, 11)]);
        let (a, _) = align_lenient("t", "Acme and ACME", Lang::En, &[("Acme".into(), Polarity::Neutral)], Occurrences::First);
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn efsa_mixed_polarity_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.json");
        fs::write(
            &p,
            r#"[{"id": 1, "text": "甲公司涨停，乙公司下跌", "labels": [{"company": "甲公司", "sentiment": "正面"}, {"company": "乙公司", "sentiment": "负面"}]},
                {"id": 2, "text": "丙公司先涨后跌", "labels": [["丙公司", "x", "y", "z", "正面"], ["丙公司", "x", "y", "z", "负面"]]}]"#,
        )
        .unwrap();
        let (docs, rep) = restructure(&p, SourceFormat::Efsa, Occurrences::All).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(rep.skipped_records, 1);
        assert_eq!(docs[0].entities.len(), 2);
        assert_eq!(docs[0].id, "efsa-1");
    }
}
