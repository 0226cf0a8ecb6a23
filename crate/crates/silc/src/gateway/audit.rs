use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub request_id: String,
    pub doc_id: String,
    pub backend: String,
    pub attempts: u32,
    pub latency_ms: u64,
    pub ok: bool,
}

/// Append-only JSONL audit trail; also kept in memory for inspection.
#[derive(Debug, Default)]
pub struct AuditLog {
    sink: Option<Mutex<BufWriter<File>>>,
    records: Mutex<Vec<AuditRecord>>,
}

impl AuditLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p)?;
        }
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sink: Some(Mutex::new(BufWriter::new(f))),
            records: Mutex::new(Vec::new()),
        })
    }

    pub fn record(&self, r: AuditRecord) {
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().unwrap();
            if let Ok(line) = serde_json::to_string(&r) {
                let _ = writeln!(w, "{line}");
                let _ = w.flush();
            }
        }
        self.records.lock().unwrap().push(r);
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap().clone()
    }
}
