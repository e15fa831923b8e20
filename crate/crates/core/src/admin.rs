//! The policy administrator: coordinates a consensus round across all
//! configured policy engines, issues scoped access tokens for granted
//! requests, publishes asynchronous outcomes on the broker, and records
//! every decided request in the decision log.
//!
//! Two entry points mirror the two routing classes: [`PolicyAdmin::validate_sync`]
//! blocks until the round decides, [`PolicyAdmin::initiate_async`] returns an
//! acknowledgement immediately and finishes the round in a background task.
//! Either way, a token is registered at the target persistence manager
//! *before* anyone sees it, and rounds that decide nothing issue nothing.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;
use tokio::sync::mpsc;

use crate::broker::MessageBroker;
use crate::clock::Clock;
use crate::consensus::{ConsensusRound, RoundStatus};
use crate::engine::{EngineHealth, PolicyEngine};
use crate::history::DecisionLog;
use crate::metrics::Metrics;
use crate::model::{
    AccessToken, CheckCategory, CheckResult, Decision, HistoryRecord, Outcome, RequestId,
    RouteClass, ValidationPayload,
};
use crate::pm::{PersistenceManager, TokenRegistration};
use crate::tasks::TaskGauge;

/// Broker topic carrying the outcome of one asynchronous validation.
pub fn validation_topic(request_id: &RequestId) -> String {
    format!("validation.results.{request_id}")
}

/// Administrator tuning knobs.
#[derive(Debug, Clone)]
pub struct AdminConfig {
    /// Lifetime of issued access tokens.
    pub token_ttl_seconds: u64,
    /// How long to wait for a single engine's vote before treating it as
    /// silent.
    pub engine_timeout: Duration,
    /// Decision-log write attempts before giving up on a record.
    pub log_attempts: u32,
    /// Base backoff between log attempts (doubles each retry).
    pub log_backoff: Duration,
}

impl Default for AdminConfig {
    fn default() -> Self {
        Self {
            token_ttl_seconds: 60,
            engine_timeout: Duration::from_secs(10),
            log_attempts: 3,
            log_backoff: Duration::from_millis(50),
        }
    }
}

/// Why a validation could not reach a usable decision.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoordinateError {
    #[error("no policy engines are configured")]
    NoEngines,
    #[error(
        "consensus failed: {grants} grant / {rejects} reject / {abstentions} silent \
         across {engines} engines"
    )]
    ConsensusFailed { grants: usize, rejects: usize, abstentions: usize, engines: usize },
    #[error("all {0} policy engines timed out")]
    EnginesTimedOut(usize),
    #[error("no persistence manager serves resource `{0}`")]
    NoPersistenceManager(String),
}

/// Final result of one validated request, as delivered to the enforcement
/// point (directly for SYNC, over the broker for ASYNC).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationOutcome {
    pub request_id: RequestId,
    pub outcome: Outcome,
    /// Merged per-check failure report from the majority side of the vote.
    /// The requester sees every failure, critical or not.
    pub report: Vec<CheckResult>,
    /// Present exactly when the outcome is GRANT: the capability to execute
    /// the request once at its persistence manager.
    pub token: Option<AccessToken>,
    /// Set when the rejection was not a policy decision but an
    /// infrastructure condition (failed consensus, missing manager).
    pub infrastructure: Option<String>,
    pub route: RouteClass,
}

/// Acknowledgement returned immediately for asynchronous requests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitiationAck {
    pub request_id: RequestId,
    /// Broker topic on which the outcome will appear.
    pub topic: String,
}

struct RoundDecision {
    outcome: Outcome,
    /// Decisions from the engines on the winning side.
    supporting: Vec<Decision>,
}

/// See module docs.
pub struct PolicyAdmin {
    engines: Vec<Arc<PolicyEngine>>,
    broker: Arc<MessageBroker<ValidationOutcome>>,
    managers: BTreeMap<String, Arc<dyn PersistenceManager>>,
    log: Arc<dyn DecisionLog>,
    config: AdminConfig,
    clock: Arc<dyn Clock>,
    metrics: Arc<Metrics>,
    gauge: Arc<TaskGauge>,
}

impl std::fmt::Debug for PolicyAdmin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolicyAdmin")
            .field("engines", &self.engines.len())
            .field("managers", &self.managers.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PolicyAdmin {
    pub fn new(
        engines: Vec<Arc<PolicyEngine>>,
        broker: Arc<MessageBroker<ValidationOutcome>>,
        managers: BTreeMap<String, Arc<dyn PersistenceManager>>,
        log: Arc<dyn DecisionLog>,
        config: AdminConfig,
        clock: Arc<dyn Clock>,
        metrics: Arc<Metrics>,
    ) -> Arc<Self> {
        Arc::new(Self {
            engines,
            broker,
            managers,
            log,
            config,
            clock,
            metrics,
            gauge: TaskGauge::new(),
        })
    }

    pub fn engine_count(&self) -> usize {
        self.engines.len()
    }

    pub fn engine_health(&self) -> Vec<EngineHealth> {
        self.engines.iter().map(|e| e.health()).collect()
    }

    /// Gauge over this administrator's background work (async rounds and
    /// decision-log writes).
    pub fn gauge(&self) -> Arc<TaskGauge> {
        Arc::clone(&self.gauge)
    }

    /// Validates a synchronous request: blocks until the engines reach a
    /// majority, then issues the token (GRANT) or assembles the failure
    /// report (REJECT). The decided outcome is recorded in the decision log
    /// off the response path.
    pub async fn validate_sync(
        &self,
        payload: ValidationPayload,
    ) -> Result<ValidationOutcome, CoordinateError> {
        let round = self.run_round(&payload).await?;
        Ok(self.complete(&payload, round, RouteClass::Sync))
    }

    /// Starts validation of an asynchronous request and returns at once.
    /// The outcome — including consensus failures, which become
    /// infrastructure rejections — is published on the acknowledged topic,
    /// so every initiated request terminates with exactly one message.
    pub fn initiate_async(
        self: &Arc<Self>,
        payload: ValidationPayload,
    ) -> Result<InitiationAck, CoordinateError> {
        if self.engines.is_empty() {
            return Err(CoordinateError::NoEngines);
        }
        let ack = InitiationAck {
            request_id: payload.request_id().clone(),
            topic: validation_topic(payload.request_id()),
        };

        let admin = Arc::clone(self);
        let guard = self.gauge.track();
        tokio::spawn(async move {
            let _guard = guard;
            let outcome = match admin.run_round(&payload).await {
                Ok(round) => admin.complete(&payload, round, RouteClass::Async),
                Err(error) => {
                    admin.infrastructure_reject(&payload, RouteClass::Async, &error)
                }
            };
            let topic = validation_topic(&outcome.request_id);
            if let Err(e) = admin.broker.publish(&topic, outcome) {
                tracing::warn!(request = %payload.request_id(), error = %e, "async outcome lost");
            }
        });

        Ok(ack)
    }

    /// Fans the payload out to every engine and folds the votes into a
    /// consensus round, returning as soon as a majority exists. Engines that
    /// exceed the timeout count as abstentions; abandoned laggards keep
    /// running but cannot affect the decided round.
    async fn run_round(&self, payload: &ValidationPayload) -> Result<RoundDecision, CoordinateError> {
        if self.engines.is_empty() {
            return Err(CoordinateError::NoEngines);
        }
        self.metrics.incr_consensus_rounds();

        let (tx, mut rx) = mpsc::unbounded_channel::<Option<Decision>>();
        for engine in &self.engines {
            let engine = Arc::clone(engine);
            let payload = payload.clone();
            let tx = tx.clone();
            let timeout = self.config.engine_timeout;
            let guard = self.gauge.track();
            tokio::spawn(async move {
                let _guard = guard;
                let vote = tokio::time::timeout(timeout, engine.validate(&payload)).await.ok();
                let _ = tx.send(vote);
            });
        }
        drop(tx);

        let mut round = ConsensusRound::new(payload.request_id().clone(), self.engines.len());
        let mut votes: Vec<Decision> = Vec::with_capacity(self.engines.len());

        while let Some(response) = rx.recv().await {
            let status = match response {
                Some(decision) => {
                    let status = round.record_vote(decision.outcome);
                    votes.push(decision);
                    status
                }
                None => round.record_abstention(),
            };
            match status {
                RoundStatus::Open => continue,
                RoundStatus::Decided(outcome) => {
                    return Ok(RoundDecision {
                        outcome,
                        supporting: votes.into_iter().filter(|d| d.outcome == outcome).collect(),
                    });
                }
                RoundStatus::Failed => break,
            }
        }

        self.metrics.incr_consensus_failures();
        Err(if round.all_abstained() {
            CoordinateError::EnginesTimedOut(self.engines.len())
        } else {
            let (grants, rejects) = (
                votes.iter().filter(|d| d.outcome == Outcome::Grant).count(),
                votes.iter().filter(|d| d.outcome == Outcome::Reject).count(),
            );
            CoordinateError::ConsensusFailed {
                grants,
                rejects,
                abstentions: round.abstentions(),
                engines: self.engines.len(),
            }
        })
    }

    /// Turns a decided round into the final outcome: token issuance for
    /// grants (registered at the manager before anyone else sees it) and the
    /// merged failure report. Records the decision off the response path.
    fn complete(
        &self,
        payload: &ValidationPayload,
        round: RoundDecision,
        route: RouteClass,
    ) -> ValidationOutcome {
        let report = merge_reports(&round.supporting);

        let token = match round.outcome {
            Outcome::Reject => None,
            Outcome::Grant => match self.issue_token(payload) {
                Ok(token) => Some(token),
                Err(error) => {
                    // The decision stands (and is logged), but the grant
                    // cannot be fulfilled; the requester gets an
                    // infrastructure rejection instead of a dangling grant.
                    self.record_decision(payload, round.outcome);
                    return self.infrastructure_reject(payload, route, &error);
                }
            },
        };

        self.record_decision(payload, round.outcome);

        ValidationOutcome {
            request_id: payload.request_id().clone(),
            outcome: round.outcome,
            report,
            token,
            infrastructure: None,
            route,
        }
    }

    fn infrastructure_reject(
        &self,
        payload: &ValidationPayload,
        route: RouteClass,
        error: &dyn std::fmt::Display,
    ) -> ValidationOutcome {
        ValidationOutcome {
            request_id: payload.request_id().clone(),
            outcome: Outcome::Reject,
            report: Vec::new(),
            token: None,
            infrastructure: Some(error.to_string()),
            route,
        }
    }

    /// Creates the single-use token scoped to exactly the granted operation
    /// and registers it with the target persistence manager first.
    fn issue_token(&self, payload: &ValidationPayload) -> Result<AccessToken, CoordinateError> {
        let request = payload.request();
        let manager = self
            .managers
            .get(&request.resource)
            .ok_or_else(|| CoordinateError::NoPersistenceManager(request.resource.clone()))?;

        let token = AccessToken::issue(
            request.kind,
            &request.resource,
            self.config.token_ttl_seconds,
            self.clock.now_millis(),
        );
        manager.register_token(TokenRegistration {
            request_id: request.request_id.clone(),
            token: token.clone(),
        });
        self.metrics.incr_tokens_issued();
        Ok(token)
    }

    /// Appends the decided request to the decision log in a background task
    /// with bounded retries; logging never blocks the requester path.
    fn record_decision(&self, payload: &ValidationPayload, outcome: Outcome) {
        let request = payload.request();
        let record = HistoryRecord {
            request_id: request.request_id.clone(),
            actor_id: request.requester.actor.clone(),
            kind: request.kind,
            resource: request.resource.clone(),
            outcome,
            timestamp: self.clock.now_millis(),
        };

        let log = Arc::clone(&self.log);
        let metrics = Arc::clone(&self.metrics);
        let attempts = self.config.log_attempts.max(1);
        let backoff = self.config.log_backoff;
        let guard = self.gauge.track();
        tokio::spawn(async move {
            let _guard = guard;
            for attempt in 0..attempts {
                match log.record(record.clone()).await {
                    Ok(()) => {
                        metrics.incr_ledger_written();
                        return;
                    }
                    Err(error) if attempt + 1 == attempts => {
                        metrics.incr_ledger_dropped();
                        tracing::warn!(
                            request = %record.request_id,
                            %error,
                            "decision dropped from log after {attempts} attempts"
                        );
                    }
                    Err(_) => {
                        tokio::time::sleep(backoff * 2u32.pow(attempt)).await;
                    }
                }
            }
        });
    }
}

/// Merges the winning decisions into one per-check report: the union of
/// reported failures with exact duplicates collapsed (honest replicas
/// produce identical evidence).
fn merge_reports(supporting: &[Decision]) -> Vec<CheckResult> {
    CheckCategory::ALL
        .iter()
        .map(|&category| {
            let mut failures = Vec::new();
            for decision in supporting {
                for result in decision.check_results.iter().filter(|r| r.check == category) {
                    for failure in &result.failures {
                        if !failures.contains(failure) {
                            failures.push(failure.clone());
                        }
                    }
                }
            }
            CheckResult::from_failures(category, failures)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    use crate::clock::ManualClock;
    use crate::engine::{CheckLatency, EngineContext, FaultInjection};
    use crate::history::PlainHistoryTable;
    use crate::model::{
        failure_codes, AccessRequest, AccessRight, Actor, EngineId, RequestKind, RequesterContext,
    };
    use crate::pm::TemperaturePm;
    use crate::validators::{default_rules, ActorDirectory, BehaviorPolicy, DirectoryReader};

    struct Rig {
        admin: Arc<PolicyAdmin>,
        engines: Vec<Arc<PolicyEngine>>,
        temp_pm: Arc<TemperaturePm>,
        history: Arc<PlainHistoryTable>,
        broker: Arc<MessageBroker<ValidationOutcome>>,
        metrics: Arc<Metrics>,
    }

    fn rig(engine_count: usize, latency: CheckLatency, config: AdminConfig) -> Rig {
        let clock = ManualClock::at(10_000);
        let directory = ActorDirectory::new();
        directory
            .create(Actor::stationary(
                "sensor-1",
                "dev-key",
                vec![
                    AccessRight::new(RequestKind::Write, "temperature"),
                    AccessRight::new(RequestKind::Read, "temperature"),
                ],
                "10.0.0.1",
                "aa:bb:cc:dd:ee:01",
            ))
            .unwrap();
        let history = PlainHistoryTable::new();

        let ctx = EngineContext {
            directory: DirectoryReader::new(Arc::clone(&directory)),
            vulnerabilities: crate::validators::VulnerabilityStore::new(),
            rules: Arc::new(default_rules((-90.0, 60.0))),
            history: history.clone(),
            behavior: BehaviorPolicy::default(),
            clock: clock.clone(),
            workers: None,
        };
        let engines: Vec<Arc<PolicyEngine>> = (0..engine_count)
            .map(|n| {
                PolicyEngine::new(
                    EngineId::new(format!("pe{n}")),
                    ctx.clone(),
                    latency,
                    FaultInjection::Enabled,
                )
            })
            .collect();

        let temp_pm = TemperaturePm::new(clock.clone());
        let mut managers: Map<String, Arc<dyn PersistenceManager>> = Map::new();
        managers.insert("temperature".into(), Arc::clone(&temp_pm) as _);

        let broker = Arc::new(MessageBroker::new());
        let metrics = Arc::new(Metrics::default());
        let admin = PolicyAdmin::new(
            engines.clone(),
            Arc::clone(&broker),
            managers,
            history.clone(),
            config,
            clock,
            Arc::clone(&metrics),
        );

        Rig { admin, engines, temp_pm, history, broker, metrics }
    }

    fn payload(kind: RequestKind, params: &[(&str, &str)]) -> ValidationPayload {
        let requester = RequesterContext {
            agent: "fw/1".into(),
            actor: "sensor-1".into(),
            ip_address: "10.0.0.1".into(),
            mac_address: "aa:bb:cc:dd:ee:01".into(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
            auth_token: "dev-key".into(),
        };
        ValidationPayload::new(AccessRequest {
            request_id: RequestId::random(),
            kind,
            resource: "temperature".into(),
            parameters: params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            requester,
            received_at: 10_000,
        })
    }

    #[tokio::test]
    async fn sync_grant_registers_token_before_returning() {
        let rig = rig(3, CheckLatency::none(), AdminConfig::default());
        let outcome = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap();

        assert_eq!(outcome.outcome, Outcome::Grant);
        let token = outcome.token.expect("grant carries token");
        // Already registered: the PM holds it and will accept it.
        assert_eq!(rig.temp_pm.pending_tokens(), 1);
        assert_eq!(token.rights.len(), 1);
        assert!(token.allows(RequestKind::Write, "temperature"));
        assert!(outcome.report.iter().all(|r| r.passed));
        assert_eq!(rig.metrics.snapshot().tokens_issued, 1);
    }

    #[tokio::test]
    async fn sync_reject_returns_merged_report_and_no_token() {
        let rig = rig(3, CheckLatency::none(), AdminConfig::default());
        let outcome = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "not-a-number")]))
            .await
            .unwrap();

        assert_eq!(outcome.outcome, Outcome::Reject);
        assert!(outcome.token.is_none());
        assert!(outcome.infrastructure.is_none());
        assert_eq!(rig.temp_pm.pending_tokens(), 0);

        // Three identical replicas collapse to one copy of the failure.
        let usage = &outcome.report[2];
        assert_eq!(usage.check, CheckCategory::Usage);
        assert_eq!(usage.failures.len(), 1);
        assert_eq!(usage.failures[0].code, failure_codes::MALFORMED_PARAMETER);
    }

    #[tokio::test]
    async fn every_decided_round_lands_in_the_decision_log() {
        let rig = rig(3, CheckLatency::none(), AdminConfig::default());
        rig.admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap();
        rig.admin
            .validate_sync(payload(RequestKind::Write, &[("value", "bogus")]))
            .await
            .unwrap();

        rig.admin.gauge().quiesce().await;
        let records = rig.history.all();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].outcome, Outcome::Grant);
        assert_eq!(records[1].outcome, Outcome::Reject);
        assert!(records.iter().all(|r| r.actor_id == "sensor-1"));
        assert_eq!(rig.metrics.snapshot().ledger_records_written, 2);
    }

    #[tokio::test]
    async fn minority_of_compromised_engines_is_outvoted() {
        let rig = rig(3, CheckLatency::none(), AdminConfig::default());
        rig.engines[0].set_compromised(true).unwrap();

        let grant = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap();
        assert_eq!(grant.outcome, Outcome::Grant);

        let reject = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "bogus")]))
            .await
            .unwrap();
        assert_eq!(reject.outcome, Outcome::Reject);
    }

    #[tokio::test]
    async fn compromised_majority_controls_the_verdict() {
        // Documented failure mode: with ⌊n/2⌋+1 compromised replicas the
        // vote itself is compromised. 2 of 3 inverters flip both verdicts.
        let rig = rig(3, CheckLatency::none(), AdminConfig::default());
        rig.engines[0].set_compromised(true).unwrap();
        rig.engines[1].set_compromised(true).unwrap();

        let flipped_good = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap();
        assert_eq!(flipped_good.outcome, Outcome::Reject);

        let flipped_bad = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "bogus")]))
            .await
            .unwrap();
        assert_eq!(flipped_bad.outcome, Outcome::Grant);
    }

    #[tokio::test]
    async fn split_vote_fails_consensus_without_logging() {
        // n=2 with one inverter: one grant, one reject, no majority of 2.
        let rig = rig(2, CheckLatency::none(), AdminConfig::default());
        rig.engines[1].set_compromised(true).unwrap();

        let err = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap_err();
        assert_eq!(
            err,
            CoordinateError::ConsensusFailed { grants: 1, rejects: 1, abstentions: 0, engines: 2 }
        );

        rig.admin.gauge().quiesce().await;
        assert!(rig.history.is_empty(), "failed rounds must not be logged");
        assert_eq!(rig.temp_pm.pending_tokens(), 0);
        assert_eq!(rig.metrics.snapshot().consensus_failures, 1);
    }

    #[tokio::test(start_paused = true)]
    async fn silent_engines_time_out_as_abstentions() {
        let config = AdminConfig {
            engine_timeout: Duration::from_millis(50),
            ..AdminConfig::default()
        };
        // Every engine needs 4×100ms, far past the 50ms timeout.
        let rig = rig(3, CheckLatency::uniform(100), config);
        let err = rig
            .admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap_err();
        assert_eq!(err, CoordinateError::EnginesTimedOut(3));
    }

    #[tokio::test(start_paused = true)]
    async fn sync_validation_returns_at_majority_not_at_last_vote() {
        // Two fast engines decide the round; the slow third is abandoned.
        let clock = ManualClock::at(0);
        let directory = ActorDirectory::new();
        directory
            .create(Actor::user(
                "u",
                "k",
                vec![AccessRight::new(RequestKind::Read, "temperature")],
            ))
            .unwrap();
        let history = PlainHistoryTable::new();
        let ctx = EngineContext {
            directory: DirectoryReader::new(directory),
            vulnerabilities: crate::validators::VulnerabilityStore::new(),
            rules: Arc::new(default_rules((-90.0, 60.0))),
            history: history.clone(),
            behavior: BehaviorPolicy::default(),
            clock: clock.clone(),
            workers: None,
        };
        let mk = |id: &str, ms: u64| {
            PolicyEngine::new(
                EngineId::new(id),
                ctx.clone(),
                CheckLatency::uniform(ms),
                FaultInjection::Enabled,
            )
        };
        let engines = vec![mk("fast1", 10), mk("fast2", 10), mk("slow", 250)];

        let temp_pm = TemperaturePm::new(clock.clone());
        let mut managers: Map<String, Arc<dyn PersistenceManager>> = Map::new();
        managers.insert("temperature".into(), temp_pm as _);
        let admin = PolicyAdmin::new(
            engines,
            Arc::new(MessageBroker::new()),
            managers,
            history,
            AdminConfig::default(),
            clock,
            Arc::new(Metrics::default()),
        );

        let requester = RequesterContext {
            agent: "a".into(),
            actor: "u".into(),
            ip_address: "1.2.3.4".into(),
            mac_address: "aa:bb:cc:dd:ee:ff".into(),
            os_id: "os".into(),
            os_version: "1".into(),
            auth_token: "k".into(),
        };
        let payload = ValidationPayload::new(AccessRequest {
            request_id: RequestId::random(),
            kind: RequestKind::Read,
            resource: "temperature".into(),
            parameters: [("actor_id".to_string(), "u".to_string())].into(),
            requester,
            received_at: 0,
        });

        let started = tokio::time::Instant::now();
        let outcome = admin.validate_sync(payload).await.unwrap();
        assert_eq!(outcome.outcome, Outcome::Grant);
        // Decided when the two 40ms engines voted, not at 1000ms.
        assert_eq!(started.elapsed(), Duration::from_millis(40));
    }

    #[tokio::test]
    async fn async_initiation_acks_immediately_and_publishes_outcome() {
        let rig = rig(3, CheckLatency::none(), AdminConfig::default());
        let payload = payload(RequestKind::Write, &[("value", "19.5")]);
        let mut subscription = rig.broker.subscribe(&validation_topic(payload.request_id()));

        let ack = rig.admin.initiate_async(payload.clone()).unwrap();
        assert_eq!(&ack.request_id, payload.request_id());

        let outcome = subscription.recv().await.unwrap();
        assert_eq!(outcome.outcome, Outcome::Grant);
        assert_eq!(outcome.route, RouteClass::Async);
        assert!(outcome.token.is_some());

        rig.admin.gauge().quiesce().await;
        assert_eq!(rig.history.len(), 1);
    }

    #[tokio::test]
    async fn async_consensus_failure_publishes_terminal_infrastructure_reject() {
        let rig = rig(2, CheckLatency::none(), AdminConfig::default());
        rig.engines[0].set_compromised(true).unwrap();

        let payload = payload(RequestKind::Write, &[("value", "19.5")]);
        let mut subscription = rig.broker.subscribe(&validation_topic(payload.request_id()));
        rig.admin.initiate_async(payload).unwrap();

        let outcome = subscription.recv().await.unwrap();
        assert_eq!(outcome.outcome, Outcome::Reject);
        assert!(outcome.token.is_none());
        assert!(outcome.infrastructure.is_some());

        rig.admin.gauge().quiesce().await;
        assert!(rig.history.is_empty());
    }

    #[tokio::test]
    async fn missing_manager_downgrades_grant_to_infrastructure_reject() {
        let clock = ManualClock::at(0);
        let directory = ActorDirectory::new();
        directory
            .create(Actor::user(
                "u",
                "k",
                vec![AccessRight::new(RequestKind::Read, "temperature")],
            ))
            .unwrap();
        let history = PlainHistoryTable::new();
        let ctx = EngineContext {
            directory: DirectoryReader::new(directory),
            vulnerabilities: crate::validators::VulnerabilityStore::new(),
            rules: Arc::new(default_rules((-90.0, 60.0))),
            history: history.clone(),
            behavior: BehaviorPolicy::default(),
            clock: clock.clone(),
            workers: None,
        };
        let engine = PolicyEngine::new(
            EngineId::new("pe0"),
            ctx,
            CheckLatency::none(),
            FaultInjection::Enabled,
        );
        // No managers at all.
        let admin = PolicyAdmin::new(
            vec![engine],
            Arc::new(MessageBroker::new()),
            Map::new(),
            history.clone(),
            AdminConfig::default(),
            clock,
            Arc::new(Metrics::default()),
        );

        let requester = RequesterContext {
            agent: "a".into(),
            actor: "u".into(),
            ip_address: "1.2.3.4".into(),
            mac_address: "aa:bb:cc:dd:ee:ff".into(),
            os_id: "os".into(),
            os_version: "1".into(),
            auth_token: "k".into(),
        };
        let outcome = admin
            .validate_sync(ValidationPayload::new(AccessRequest {
                request_id: RequestId::random(),
                kind: RequestKind::Read,
                resource: "temperature".into(),
                parameters: [("actor_id".to_string(), "u".to_string())].into(),
                requester,
                received_at: 0,
            }))
            .await
            .unwrap();

        assert_eq!(outcome.outcome, Outcome::Reject);
        assert!(outcome.token.is_none());
        assert!(outcome.infrastructure.unwrap().contains("temperature"));

        // The consensus decision itself (a grant) is still logged.
        admin.gauge().quiesce().await;
        assert_eq!(history.all()[0].outcome, Outcome::Grant);
    }

    #[tokio::test(start_paused = true)]
    async fn log_writes_retry_with_backoff_then_drop() {
        let rig = rig(1, CheckLatency::none(), AdminConfig::default());
        rig.history.set_available(false);

        rig.admin
            .validate_sync(payload(RequestKind::Write, &[("value", "21.0")]))
            .await
            .unwrap();
        rig.admin.gauge().quiesce().await;

        assert_eq!(rig.history.len(), 0);
        assert_eq!(rig.metrics.snapshot().ledger_records_dropped, 1);

        // With the log healthy again, the next decision lands.
        rig.history.set_available(true);
        rig.admin
            .validate_sync(payload(RequestKind::Write, &[("value", "22.0")]))
            .await
            .unwrap();
        rig.admin.gauge().quiesce().await;
        assert_eq!(rig.history.len(), 1);
        assert_eq!(rig.metrics.snapshot().ledger_records_written, 1);
    }

    #[tokio::test]
    async fn no_engines_error_on_both_paths() {
        let rig = rig(0, CheckLatency::none(), AdminConfig::default());
        let sync_err = rig
            .admin
            .validate_sync(payload(RequestKind::Read, &[("actor_id", "x")]))
            .await
            .unwrap_err();
        assert_eq!(sync_err, CoordinateError::NoEngines);
        let async_err = rig
            .admin
            .initiate_async(payload(RequestKind::Write, &[("value", "1")]))
            .unwrap_err();
        assert_eq!(async_err, CoordinateError::NoEngines);
    }
}
