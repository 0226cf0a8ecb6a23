//! Model endpoints: a uniform completion interface, bounded concurrency,
//! an audit trail, HTTP chat-completion transport and a deterministic mock.

mod audit;
mod http;
mod limiter;
mod mock;

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use silc_core::gateway::Stage;

pub use audit::{AuditLog, AuditRecord};
pub use http::{ChatBackend, HttpConfig, RetryPolicy, ReqwestTransport, Transport, TransportError};
pub use limiter::Semaphore;
pub use mock::{FlipLogEntry, MockBackend, MockPolicy, REFUSAL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("endpoint returned status {status}: {body}")]
    EndpointError { status: u16, body: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Identifies one model call; joins responses to documents in audit logs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RequestId {
    pub stage: Stage,
    pub doc_id: String,
    /// 0 for the first prompt, 1 for the re-prompt after a parse failure.
    pub round: u32,
}

impl RequestId {
    pub fn new(stage: Stage, doc_id: impl Into<String>) -> Self {
        Self {
            stage,
            doc_id: doc_id.into(),
            round: 0,
        }
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.stage {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
        };
        write!(f, "{s}:{}:{}", self.doc_id, self.round)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str, request: &RequestId) -> Result<Completion, GatewayError>;
}

/// A backend behind a concurrency bound, with every call audited.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    limiter: Arc<Semaphore>,
    audit: Option<Arc<AuditLog>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, max_in_flight: usize) -> Self {
        Self {
            backend,
            limiter: Arc::new(Semaphore::new(max_in_flight.max(1))),
            audit: None,
        }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn max_in_flight(&self) -> usize {
        self.limiter.capacity()
    }

    pub fn complete(&self, prompt: &str, request: &RequestId) -> Result<Completion, GatewayError> {
        let _permit = self.limiter.acquire();
        let t0 = Instant::now();
        let out = self.backend.complete(prompt, request);
        if let Some(a) = &self.audit {
            let attempts = match &out {
                Ok(c) => c.attempts,
                Err(GatewayError::RetriesExhausted { attempts, .. }) => *attempts,
                Err(_) => 1,
            };
            a.record(AuditRecord {
                request_id: request.to_string(),
                doc_id: request.doc_id.clone(),
                backend: self.backend.name().to_string(),
                attempts,
                latency_ms: t0.elapsed().as_millis() as u64,
                ok: out.is_ok(),
            });
        }
        out
    }
}
