//! Policy engines: replicated validators that each run the full trust
//! algorithm and vote on the outcome.
//!
//! Engines are deterministic — identical inputs against identical stores
//! yield identical decisions — which is what makes majority voting
//! meaningful: honest replicas agree, so disagreement isolates faults. A
//! *compromised* engine (test/fault-injection only) runs the same checks and
//! then inverts its verdict, the worst-case silent corruption.
//!
//! For benchmarking, each check can carry a simulated evaluation latency.
//! The sleeps run while holding a permit from a shared bounded worker pool,
//! which models a fixed-capacity host: the more engine replicas contend for
//! the pool, the longer each validation takes, like co-located replicas on
//! real edge hardware.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::clock::Clock;
use crate::history::HistorySource;
use crate::model::{
    aggregate_decision, failure_codes, CheckCategory, CheckFailure, CheckResult, Decision,
    EngineId, Severity, ValidationPayload,
};
use crate::validators::{
    check_behavior, check_environment, check_identity, check_usage, BehaviorPolicy,
    DirectoryReader, ParameterRules, VulnerabilityStore,
};

/// Per-check simulated evaluation latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckLatency {
    per_check: [u64; 4],
}

impl CheckLatency {
    /// The same latency for all four checks.
    pub fn uniform(millis: u64) -> Self {
        Self { per_check: [millis; 4] }
    }

    pub fn none() -> Self {
        Self::uniform(0)
    }

    pub fn for_check(&self, category: CheckCategory) -> Duration {
        let index = CheckCategory::ALL.iter().position(|&c| c == category).expect("known");
        Duration::from_millis(self.per_check[index])
    }

    pub fn total(&self) -> Duration {
        Duration::from_millis(self.per_check.iter().sum())
    }
}

/// Whether runtime compromise toggling is allowed. Production deployments
/// construct engines with `Forbidden`; the benchmark harness enables it
/// explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    Forbidden,
    Enabled,
}

/// Engine construction/operation errors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("engine `{0}`: fault injection is disabled in this deployment")]
    FaultInjectionForbidden(EngineId),
    #[error("no engine named `{0}`")]
    UnknownEngine(String),
}

/// Everything an engine consults while validating: the stores behind the
/// four checks, policy knobs, time, and the optional shared worker pool.
#[derive(Debug, Clone)]
pub struct EngineContext {
    pub directory: DirectoryReader,
    pub vulnerabilities: Arc<VulnerabilityStore>,
    pub rules: Arc<ParameterRules>,
    pub history: Arc<dyn HistorySource>,
    pub behavior: BehaviorPolicy,
    pub clock: Arc<dyn Clock>,
    /// Bounded compute pool shared by all engines on the same host; `None`
    /// runs checks without contention.
    pub workers: Option<Arc<Semaphore>>,
}

/// Health view reported to monitoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngineHealth {
    pub engine_id: EngineId,
    pub compromised: bool,
}

/// One policy-engine replica.
#[derive(Debug)]
pub struct PolicyEngine {
    id: EngineId,
    ctx: EngineContext,
    latency: CheckLatency,
    fault_injection: FaultInjection,
    compromised: AtomicBool,
}

impl PolicyEngine {
    pub fn new(
        id: EngineId,
        ctx: EngineContext,
        latency: CheckLatency,
        fault_injection: FaultInjection,
    ) -> Arc<Self> {
        Arc::new(Self {
            id,
            ctx,
            latency,
            fault_injection,
            compromised: AtomicBool::new(false),
        })
    }

    pub fn id(&self) -> &EngineId {
        &self.id
    }

    pub fn is_compromised(&self) -> bool {
        self.compromised.load(Ordering::SeqCst)
    }

    /// Marks the engine compromised (it will invert every verdict) or heals
    /// it. Refused unless the deployment enabled fault injection.
    pub fn set_compromised(&self, compromised: bool) -> Result<(), EngineError> {
        if self.fault_injection == FaultInjection::Forbidden {
            return Err(EngineError::FaultInjectionForbidden(self.id.clone()));
        }
        self.compromised.store(compromised, Ordering::SeqCst);
        Ok(())
    }

    pub fn health(&self) -> EngineHealth {
        EngineHealth { engine_id: self.id.clone(), compromised: self.is_compromised() }
    }

    /// Runs the four checks in fixed order and aggregates the verdict.
    /// Infrastructure failures inside a check become critical
    /// `infrastructure_unavailable` failures: no reachable evidence, no
    /// access.
    pub async fn validate(&self, payload: &ValidationPayload) -> Decision {
        let mut results = Vec::with_capacity(CheckCategory::ALL.len());
        for category in CheckCategory::ALL {
            self.simulate_evaluation(category).await;
            results.push(self.run_check(category, payload));
        }

        let decision = aggregate_decision(
            payload.request_id().clone(),
            self.id.clone(),
            results,
        )
        .expect("one result per category by construction");

        if self.is_compromised() {
            decision.with_inverted_outcome()
        } else {
            decision
        }
    }

    fn run_check(&self, category: CheckCategory, payload: &ValidationPayload) -> CheckResult {
        let request = payload.request();
        let ctx = payload.requester();
        let outcome = match category {
            CheckCategory::Identity => {
                check_identity(ctx, request.kind, &request.resource, &self.ctx.directory)
            }
            CheckCategory::Environment => check_environment(ctx, &self.ctx.vulnerabilities),
            CheckCategory::Usage => Ok(check_usage(request, &self.ctx.rules)),
            CheckCategory::Behavior => check_behavior(
                ctx,
                &self.ctx.behavior,
                &self.ctx.directory,
                &*self.ctx.history,
                self.ctx.clock.now_millis(),
            ),
        };

        outcome.unwrap_or_else(|e| {
            CheckResult::fail(
                category,
                vec![CheckFailure::new(
                    failure_codes::INFRASTRUCTURE_UNAVAILABLE,
                    Severity::Critical,
                    format!("{category} check could not reach its backing store: {e}"),
                )],
            )
        })
    }

    async fn simulate_evaluation(&self, category: CheckCategory) {
        let duration = self.latency.for_check(category);
        if duration.is_zero() {
            return;
        }
        match &self.ctx.workers {
            Some(pool) => {
                let _permit = pool.acquire().await.expect("pool never closed");
                tokio::time::sleep(duration).await;
            }
            None => tokio::time::sleep(duration).await,
        }
    }
}
