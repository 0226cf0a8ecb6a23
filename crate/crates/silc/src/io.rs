//! JSONL and JSON file formats.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use silc_core::corpus::{validate_dataset, Document};
use silc_core::pipeline::{PseudoEntry, PseudoLabelSet};
use silc_core::PredictionRecord;

use crate::error::{Error, Result};

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::SchemaViolation {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::format(path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

/// Loads a document dataset and checks every span against its text.
pub fn load_jsonl(path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    for (i, d) in docs.iter().enumerate() {
        d.validate().map_err(|e| Error::SchemaViolation {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
    }
    validate_dataset(&docs)?;
    Ok(docs)
}

pub fn save_jsonl(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

/// One line of a pseudo-label or prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub id: String,
    pub predictions: Vec<PredictionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_ref: Option<String>,
}

pub fn save_pseudo(path: &Path, set: &PseudoLabelSet) -> Result<()> {
    let lines: Vec<PredictionLine> = set
        .entries
        .iter()
        .map(|(id, e)| PredictionLine {
            id: id.clone(),
            predictions: e.records.clone(),
            correct: e.correct,
            raw_ref: e.raw_ref.clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn load_pseudo(path: &Path) -> Result<PseudoLabelSet> {
    let lines: Vec<PredictionLine> = read_jsonl(path)?;
    let mut set = PseudoLabelSet::new(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    for l in lines {
        set.entries.insert(
            l.id,
            PseudoEntry {
                records: l.predictions,
                correct: l.correct,
                raw_ref: l.raw_ref,
            },
        );
    }
    Ok(set)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use silc_core::corpus::{EntityAnnotation, Lang, Polarity};

    #[test]
    fn round_trip_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let docs = vec![
            Document::new("a", "Rupiah leads Asia FX losses", Lang::En)
                .with_entities(vec![EntityAnnotation::new("Rupiah", 0, 6, Polarity::Negative)]),
            Document::new("b", "荣联科技涨停", Lang::Zh).with_entities(vec![EntityAnnotation::new("荣联科技", 0, 4, Polarity::Positive)]),
        ];
        save_jsonl(&p, &docs).unwrap();
        assert_eq!(load_jsonl(&p).unwrap(), docs);

        fs::write(&p, "").unwrap();
        assert!(load_jsonl(&p).unwrap().is_empty());

        fs::write(
            &p,
            "{\"id\":\"a\",\"text\":\"x\",\"lang\":\"en\",\"entities\":[]}\n{\"id\":\"b\",\"text\":\"Acme\",\"lang\":\"en\",\"entities\":[{\"value\":\"Acme\",\"end\":4,\"tag\":\"positive\"}]}\n",
        )
        .unwrap();
        match load_jsonl(&p).unwrap_err() {
            Error::SchemaViolation { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_span_is_rejected_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        fs::write(&p, "{\"id\":\"b\",\"text\":\"Acme\",\"lang\":\"en\",\"entities\":[{\"value\":\"Acme\",\"start\":1,\"end\":4,\"tag\":\"positive\"}]}\n").unwrap();
        assert!(matches!(load_jsonl(&p).unwrap_err(), Error::SchemaViolation { line: 1, .. }));
    }

    #[test]
    fn sha_of_known_input() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
