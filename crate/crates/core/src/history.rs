//! Decision history: where decided requests are recorded and how the
//! behavioral check reads them back.
//!
//! Two backends implement these traits: the hash-chained replicated ledger
//! (the default) and [`PlainHistoryTable`], an ordinary in-memory table used
//! by deployments that run the full validation pipeline without a ledger.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use thiserror::Error;

use crate::model::HistoryRecord;

/// The history backend cannot be reached; callers must fail closed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("history source unavailable: {0}")]
pub struct HistoryUnavailable(pub String);

/// Recording a decision failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decision log error: {0}")]
pub struct DecisionLogError(pub String);

/// Read side: what the behavioral check consumes.
pub trait HistorySource: Send + Sync + std::fmt::Debug {
    /// The most recent `limit` decisions for `actor_id`, newest first.
    fn recent(&self, actor_id: &str, limit: usize)
        -> Result<Vec<HistoryRecord>, HistoryUnavailable>;
}

/// Write side: where the administrator records decided requests.
#[async_trait]
pub trait DecisionLog: Send + Sync + std::fmt::Debug {
    async fn record(&self, record: HistoryRecord) -> Result<(), DecisionLogError>;
}

/// Plain mutable in-memory history table — the non-tamper-evident baseline.
/// Same interface contract as the ledger, none of the guarantees.
#[derive(Debug, Default)]
pub struct PlainHistoryTable {
    rows: Mutex<Vec<HistoryRecord>>,
    available: AtomicBool,
}

impl PlainHistoryTable {
    pub fn new() -> Arc<Self> {
        Arc::new(Self { rows: Mutex::new(Vec::new()), available: AtomicBool::new(true) })
    }

    /// Fault-injection hook: an unavailable table errors on both read and
    /// write, like an unreachable database.
    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    pub fn len(&self) -> usize {
        self.rows.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Vec<HistoryRecord> {
        self.rows.lock().unwrap().clone()
    }
}

impl HistorySource for PlainHistoryTable {
    fn recent(
        &self,
        actor_id: &str,
        limit: usize,
    ) -> Result<Vec<HistoryRecord>, HistoryUnavailable> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(HistoryUnavailable("history table offline".into()));
        }
        let rows = self.rows.lock().unwrap();
        Ok(rows
            .iter()
            .rev()
            .filter(|r| r.actor_id == actor_id)
            .take(limit)
            .cloned()
            .collect())
    }
}

#[async_trait]
impl DecisionLog for PlainHistoryTable {
    async fn record(&self, record: HistoryRecord) -> Result<(), DecisionLogError> {
        if !self.available.load(Ordering::SeqCst) {
            return Err(DecisionLogError("history table offline".into()));
        }
        self.rows.lock().unwrap().push(record);
        Ok(())
    }
}
