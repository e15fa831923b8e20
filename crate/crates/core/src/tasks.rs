//! Tracking of in-flight background work so deployments can drain cleanly.
//!
//! Async validation, broker completions and ledger replication all spawn
//! tasks that outlive the request that triggered them. Each such task holds a
//! [`TaskGuard`]; [`TaskGauge::quiesce`] waits until every guard has dropped,
//! which is how benchmarks and tests get a deterministic "all background work
//! finished" point without sleeping.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use tokio::sync::Notify;

/// Counts live background tasks and wakes waiters when the count hits zero.
#[derive(Debug, Default)]
pub struct TaskGauge {
    live: AtomicUsize,
    idle: Notify,
}

impl TaskGauge {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Registers one unit of in-flight work.
    pub fn track(self: &Arc<Self>) -> TaskGuard {
        self.live.fetch_add(1, Ordering::SeqCst);
        TaskGuard { gauge: Arc::clone(self) }
    }

    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    /// Resolves once no tracked work is in flight. Returns immediately if
    /// already idle; otherwise waits for the last guard to drop.
    pub async fn quiesce(&self) {
        loop {
            // Arm the waiter before re-checking to avoid missing the final
            // notify between the load and the await.
            let notified = self.idle.notified();
            if self.live.load(Ordering::SeqCst) == 0 {
                return;
            }
            notified.await;
        }
    }
}

/// RAII handle for one tracked task; dropping it marks the work finished.
#[derive(Debug)]
pub struct TaskGuard {
    gauge: Arc<TaskGauge>,
}

impl Drop for TaskGuard {
    fn drop(&mut self) {
        if self.gauge.live.fetch_sub(1, Ordering::SeqCst) == 1 {
            self.gauge.idle.notify_waiters();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[tokio::test(start_paused = true)]
    async fn quiesce_waits_for_all_guards() {
        let gauge = TaskGauge::new();
        for delay in [10u64, 30, 20] {
            let guard = gauge.track();
            tokio::spawn(async move {
                tokio::time::sleep(Duration::from_millis(delay)).await;
                drop(guard);
            });
        }
        assert_eq!(gauge.live(), 3);
        gauge.quiesce().await;
        assert_eq!(gauge.live(), 0);
    }

    #[tokio::test]
    async fn quiesce_returns_immediately_when_idle() {
        let gauge = TaskGauge::new();
        gauge.quiesce().await;
        let guard = gauge.track();
        drop(guard);
        gauge.quiesce().await;
    }
}
