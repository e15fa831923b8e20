//! Lightweight operational counters, readable as one snapshot.
//!
//! These exist for observability and for tests that assert on system-level
//! behavior (e.g. "no persistence call happened for a rejected request");
//! they are not a metrics pipeline.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

/// Monotonic counters shared across the deployment. All methods are cheap
/// and lock-free; clone-free sharing via `Arc`.
#[derive(Debug, Default)]
pub struct Metrics {
    requests_admitted: AtomicU64,
    requests_granted: AtomicU64,
    requests_rejected: AtomicU64,
    requests_accepted_async: AtomicU64,
    consensus_rounds: AtomicU64,
    consensus_failures: AtomicU64,
    tokens_issued: AtomicU64,
    ledger_records_written: AtomicU64,
    ledger_records_dropped: AtomicU64,
}

/// Point-in-time copy of every counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricsSnapshot {
    pub requests_admitted: u64,
    pub requests_granted: u64,
    pub requests_rejected: u64,
    pub requests_accepted_async: u64,
    pub consensus_rounds: u64,
    pub consensus_failures: u64,
    pub tokens_issued: u64,
    pub ledger_records_written: u64,
    pub ledger_records_dropped: u64,
}

impl Metrics {
    pub fn incr_admitted(&self) {
        self.requests_admitted.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_granted(&self) {
        self.requests_granted.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_rejected(&self) {
        self.requests_rejected.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_accepted_async(&self) {
        self.requests_accepted_async.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_consensus_rounds(&self) {
        self.consensus_rounds.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_consensus_failures(&self) {
        self.consensus_failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_tokens_issued(&self) {
        self.tokens_issued.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_ledger_written(&self) {
        self.ledger_records_written.fetch_add(1, Ordering::Relaxed);
    }

    pub fn incr_ledger_dropped(&self) {
        self.ledger_records_dropped.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        MetricsSnapshot {
            requests_admitted: self.requests_admitted.load(Ordering::Relaxed),
            requests_granted: self.requests_granted.load(Ordering::Relaxed),
            requests_rejected: self.requests_rejected.load(Ordering::Relaxed),
            requests_accepted_async: self.requests_accepted_async.load(Ordering::Relaxed),
            consensus_rounds: self.consensus_rounds.load(Ordering::Relaxed),
            consensus_failures: self.consensus_failures.load(Ordering::Relaxed),
            tokens_issued: self.tokens_issued.load(Ordering::Relaxed),
            ledger_records_written: self.ledger_records_written.load(Ordering::Relaxed),
            ledger_records_dropped: self.ledger_records_dropped.load(Ordering::Relaxed),
        }
    }
}
