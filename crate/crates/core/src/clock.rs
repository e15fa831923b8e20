//! Time source abstraction.
//!
//! Everything that needs "now" — token expiry, ledger timestamps, behavioral
//! blocks — reads it through [`Clock`], so a deployment can run against real
//! wall time, tokio's paused virtual time, or a hand-cranked test clock
//! without any component noticing the difference.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch.
pub trait Clock: Send + Sync + std::fmt::Debug {
    fn now_millis(&self) -> u64;
}

/// Clock driven by the tokio runtime: an epoch base captured at construction
/// plus elapsed `tokio::time::Instant` time. Under a paused runtime this
/// advances with virtual time; under a normal runtime it tracks wall time.
#[derive(Debug)]
pub struct RuntimeClock {
    base_millis: u64,
    started: tokio::time::Instant,
}

impl RuntimeClock {
    /// Must be called inside a tokio runtime.
    pub fn new() -> Self {
        let base_millis = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self { base_millis, started: tokio::time::Instant::now() }
    }
}

impl Default for RuntimeClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RuntimeClock {
    fn now_millis(&self) -> u64 {
        self.base_millis + self.started.elapsed().as_millis() as u64
    }
}

/// Fully manual clock for tests: time moves only when told to.
#[derive(Debug, Default)]
pub struct ManualClock {
    now: AtomicU64,
}

impl ManualClock {
    pub fn at(now_millis: u64) -> Arc<Self> {
        Arc::new(Self { now: AtomicU64::new(now_millis) })
    }

    pub fn advance(&self, millis: u64) {
        self.now.fetch_add(millis, Ordering::SeqCst);
    }

    pub fn set(&self, now_millis: u64) {
        self.now.store(now_millis, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_millis(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}
