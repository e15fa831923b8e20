//! The edge gateway: the single enforcement point in front of every
//! resource. It parses the requester header, routes the request by class
//! (synchronous reads and administration, asynchronous writes), and only
//! ever touches a persistence manager with a token issued by the policy
//! administrator — or, in conventional mode, after a perimeter identity
//! check, which is exactly the weaker model the zero-trust pipeline
//! replaces.
//!
//! Also here: the device-side [`ClientComponent`] that assembles the
//! requester header (filling in platform facts and overwriting network
//! identity with what the connection actually shows), and the [`Analyser`]
//! endpoint operators use to inspect engine health and actor history.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admin::{validation_topic, PolicyAdmin, ValidationOutcome};
use crate::broker::MessageBroker;
use crate::clock::Clock;
use crate::engine::EngineHealth;
use crate::history::HistorySource;
use crate::metrics::Metrics;
use crate::model::{
    AccessRequest, CheckResult, HeaderError, HistoryRecord, Outcome, RequestId, RequestKind,
    RequesterContext, RouteClass, ValidationPayload,
};
use crate::pm::{PersistenceManager, PmOutput};
use crate::tasks::TaskGauge;
use crate::validators::{check_identity, DirectoryReader};

/// Request body as it arrives at the gateway, before admission.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRequest {
    pub kind: RequestKind,
    pub resource: String,
    pub parameters: BTreeMap<String, String>,
}

/// What the requester gets back from the gateway.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum GatewayResponse {
    /// Validated, executed, and here is the result.
    Granted { request_id: RequestId, data: PmOutput },
    /// Admitted for asynchronous validation; the outcome is applied in the
    /// background.
    Accepted { request_id: RequestId },
    /// Refused, either by policy (see `report`) or because the control
    /// plane could not decide (`infrastructure`).
    Rejected {
        request_id: RequestId,
        report: Vec<CheckResult>,
        infrastructure: Option<String>,
    },
}

impl GatewayResponse {
    pub fn request_id(&self) -> &RequestId {
        match self {
            Self::Granted { request_id, .. }
            | Self::Accepted { request_id }
            | Self::Rejected { request_id, .. } => request_id,
        }
    }

    /// True for GRANTED and ACCEPTED: the request got past the gate.
    pub fn is_admitted_success(&self) -> bool {
        !matches!(self, Self::Rejected { .. })
    }
}

/// Failures that occur before a request is admitted at all — these never
/// reach the validation pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("client secret mismatch")]
    BadClientSecret,
    #[error("requester header: {0}")]
    Header(#[from] HeaderError),
    #[error("missing credentials: {0} is empty")]
    MissingCredentials(&'static str),
}

/// How the gateway decides: through the full validation pipeline, or the
/// conventional perimeter model (identity only, then trusted execution).
#[derive(Clone)]
pub enum PepMode {
    ZeroTrust { admin: Arc<PolicyAdmin>, broker: Arc<MessageBroker<ValidationOutcome>> },
    Conventional { directory: DirectoryReader },
}

impl std::fmt::Debug for PepMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ZeroTrust { .. } => f.write_str("ZeroTrust"),
            Self::Conventional { .. } => f.write_str("Conventional"),
        }
    }
}

/// The policy enforcement point. See module docs.
#[derive(Debug)]
pub struct Pep {
    mode: PepMode,
    managers: BTreeMap<String, Arc<dyn PersistenceManager>>,
    client_secret: String,
    /// Fixed admission overhead (TLS, header handling) applied to every
    /// request before any validation work.
    request_overhead: Duration,
    clock: Arc<dyn Clock>,
    metrics: Arc<Metrics>,
    gauge: Arc<TaskGauge>,
}

impl Pep {
    pub fn new(
        mode: PepMode,
        managers: BTreeMap<String, Arc<dyn PersistenceManager>>,
        client_secret: impl Into<String>,
        request_overhead: Duration,
        clock: Arc<dyn Clock>,
        metrics: Arc<Metrics>,
    ) -> Arc<Self> {
        Arc::new(Self {
            mode,
            managers,
            client_secret: client_secret.into(),
            request_overhead,
            clock,
            metrics,
            gauge: TaskGauge::new(),
        })
    }

    /// Gauge over asynchronous completions started by this gateway.
    pub fn gauge(&self) -> Arc<TaskGauge> {
        Arc::clone(&self.gauge)
    }

    /// Admits one request: checks the shared client secret, parses the
    /// requester header, and routes the request through whichever decision
    /// model this gateway runs. Policy refusals come back as
    /// [`GatewayResponse::Rejected`]; only pre-admission problems are `Err`.
    pub async fn admit(
        &self,
        header_value: &str,
        client_secret: &str,
        raw: RawRequest,
    ) -> Result<GatewayResponse, GatewayError> {
        if client_secret != self.client_secret {
            return Err(GatewayError::BadClientSecret);
        }
        let requester = RequesterContext::parse(header_value)?;
        if requester.actor.is_empty() {
            return Err(GatewayError::MissingCredentials("actor"));
        }
        if requester.auth_token.is_empty() {
            return Err(GatewayError::MissingCredentials("auth_token"));
        }

        self.metrics.incr_admitted();
        if !self.request_overhead.is_zero() {
            tokio::time::sleep(self.request_overhead).await;
        }

        let payload = ValidationPayload::new(AccessRequest {
            request_id: RequestId::random(),
            kind: raw.kind,
            resource: raw.resource,
            parameters: raw.parameters,
            requester,
            received_at: self.clock.now_millis(),
        });

        Ok(match &self.mode {
            PepMode::Conventional { directory } => self.decide_conventional(directory, payload).await,
            PepMode::ZeroTrust { admin, broker } => match payload.request().route() {
                RouteClass::Sync => self.decide_sync(admin, payload).await,
                RouteClass::Async => self.dispatch_async(admin, broker, payload),
            },
        })
    }

    /// Conventional perimeter model: one identity check at the gate, then
    /// direct, trusted execution. Requests never see the engines, the
    /// administrator, or tokens, and writes are as synchronous as reads.
    async fn decide_conventional(
        &self,
        directory: &DirectoryReader,
        payload: ValidationPayload,
    ) -> GatewayResponse {
        let request = payload.request();
        let identity = match check_identity(
            payload.requester(),
            request.kind,
            &request.resource,
            directory,
        ) {
            Ok(result) => result,
            Err(error) => return self.infra_rejected(&payload, error.to_string()),
        };
        if !identity.passed {
            self.metrics.incr_rejected();
            return GatewayResponse::Rejected {
                request_id: request.request_id.clone(),
                report: vec![identity],
                infrastructure: None,
            };
        }

        let Some(manager) = self.managers.get(&request.resource) else {
            return self.infra_rejected(&payload, format!("no manager for `{}`", request.resource));
        };
        match manager.execute_trusted(request).await {
            Ok(data) => {
                self.metrics.incr_granted();
                GatewayResponse::Granted { request_id: request.request_id.clone(), data }
            }
            Err(error) => self.infra_rejected(&payload, error.to_string()),
        }
    }

    /// Synchronous zero-trust path: wait for the verdict, then redeem the
    /// token at the persistence manager while the requester holds the line.
    async fn decide_sync(&self, admin: &Arc<PolicyAdmin>, payload: ValidationPayload) -> GatewayResponse {
        match admin.validate_sync(payload.clone()).await {
            Ok(outcome) => self.settle_sync(&payload, outcome).await,
            // Undecided rounds fail closed.
            Err(error) => self.infra_rejected(&payload, error.to_string()),
        }
    }

    async fn settle_sync(&self, payload: &ValidationPayload, outcome: ValidationOutcome) -> GatewayResponse {
        let request = payload.request();
        match outcome.outcome {
            Outcome::Reject => {
                self.metrics.incr_rejected();
                GatewayResponse::Rejected {
                    request_id: request.request_id.clone(),
                    report: outcome.report,
                    infrastructure: outcome.infrastructure,
                }
            }
            Outcome::Grant => {
                let Some(token) = outcome.token else {
                    return self.infra_rejected(payload, "grant carried no token".to_string());
                };
                let Some(manager) = self.managers.get(&request.resource) else {
                    return self
                        .infra_rejected(payload, format!("no manager for `{}`", request.resource));
                };
                match manager.execute(&token.secret, request).await {
                    Ok(data) => {
                        self.metrics.incr_granted();
                        GatewayResponse::Granted { request_id: request.request_id.clone(), data }
                    }
                    Err(error) => self.infra_rejected(payload, error.to_string()),
                }
            }
        }
    }

    /// Asynchronous zero-trust path: subscribe to the outcome topic, hand
    /// the round to the administrator, and acknowledge immediately. A
    /// background task applies the effect once the verdict arrives.
    fn dispatch_async(
        &self,
        admin: &Arc<PolicyAdmin>,
        broker: &Arc<MessageBroker<ValidationOutcome>>,
        payload: ValidationPayload,
    ) -> GatewayResponse {
        let request_id = payload.request_id().clone();
        let mut subscription = broker.subscribe(&validation_topic(&request_id));

        if let Err(error) = admin.initiate_async(payload.clone()) {
            return self.infra_rejected(&payload, error.to_string());
        }
        self.metrics.incr_accepted_async();

        let manager = self.managers.get(&payload.request().resource).cloned();
        let metrics = Arc::clone(&self.metrics);
        let broker = Arc::clone(broker);
        let guard = self.gauge.track();
        tokio::spawn(async move {
            let _guard = guard;
            let Some(outcome) = subscription.recv().await else {
                tracing::warn!(request = %payload.request_id(), "async outcome never arrived");
                return;
            };
            match (outcome.outcome, outcome.token, manager) {
                (Outcome::Grant, Some(token), Some(manager)) => {
                    match manager.execute(&token.secret, payload.request()).await {
                        Ok(_) => metrics.incr_granted(),
                        Err(error) => {
                            metrics.incr_rejected();
                            tracing::warn!(request = %payload.request_id(), %error, "async grant not applied");
                        }
                    }
                }
                (Outcome::Grant, _, _) => {
                    // Granted but unfulfillable (no token or no manager);
                    // counted as rejected since the effect never happened.
                    metrics.incr_rejected();
                }
                (Outcome::Reject, _, _) => metrics.incr_rejected(),
            }
            broker.retire_topic(&validation_topic(payload.request_id()));
        });

        GatewayResponse::Accepted { request_id }
    }

    fn infra_rejected(&self, payload: &ValidationPayload, reason: String) -> GatewayResponse {
        self.metrics.incr_rejected();
        GatewayResponse::Rejected {
            request_id: payload.request_id().clone(),
            report: Vec::new(),
            infrastructure: Some(reason),
        }
    }
}

/// Device-resident client configuration: facts about the platform the
/// client runs on, reported identically on every request.
#[derive(Debug, Clone)]
pub struct ClientProfile {
    pub agent: String,
    pub os_id: String,
    pub os_version: String,
}

/// Network identity as observed on the actual connection. The client
/// component copies these into the header wholesale — a requester cannot
/// claim an address it does not hold.
#[derive(Debug, Clone)]
pub struct Connection {
    pub ip_address: String,
    pub mac_address: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("missing credentials: {0} is empty")]
    MissingCredentials(&'static str),
}

/// Builds the requester header on the device side.
#[derive(Debug, Clone)]
pub struct ClientComponent {
    profile: ClientProfile,
}

impl ClientComponent {
    pub fn new(profile: ClientProfile) -> Self {
        Self { profile }
    }

    /// Assembles the wire header for one request: credentials from the
    /// caller, platform facts from the profile, network identity from the
    /// live connection.
    pub fn header_for(
        &self,
        actor_id: &str,
        auth_token: &str,
        connection: &Connection,
    ) -> Result<String, ClientError> {
        if actor_id.is_empty() {
            return Err(ClientError::MissingCredentials("actor"));
        }
        if auth_token.is_empty() {
            return Err(ClientError::MissingCredentials("auth_token"));
        }
        Ok(RequesterContext {
            agent: self.profile.agent.clone(),
            actor: actor_id.to_string(),
            ip_address: connection.ip_address.clone(),
            mac_address: connection.mac_address.clone(),
            os_id: self.profile.os_id.clone(),
            os_version: self.profile.os_version.clone(),
            auth_token: auth_token.to_string(),
        }
        .to_header_value())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyserError {
    #[error("analyser access denied")]
    Denied,
    #[error("analyser unavailable: {0}")]
    Unavailable(String),
    #[error("not supported in this deployment")]
    NotSupported,
}

/// Operator endpoint: engine health and per-actor decision history, gated
/// on an administration right for the `analyser` resource.
pub struct Analyser {
    directory: DirectoryReader,
    history: Arc<dyn HistorySource>,
    admin: Option<Arc<PolicyAdmin>>,
}

impl std::fmt::Debug for Analyser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Analyser").field("admin", &self.admin.is_some()).finish()
    }
}

impl Analyser {
    pub fn new(
        directory: DirectoryReader,
        history: Arc<dyn HistorySource>,
        admin: Option<Arc<PolicyAdmin>>,
    ) -> Self {
        Self { directory, history, admin }
    }

    fn authenticate(&self, actor_id: &str, api_key: &str) -> Result<(), AnalyserError> {
        let actor = self
            .directory
            .get(actor_id)
            .map_err(|e| AnalyserError::Unavailable(e.to_string()))?
            .ok_or(AnalyserError::Denied)?;
        if actor.api_key != api_key || !actor.has_right(RequestKind::Admin, "analyser") {
            return Err(AnalyserError::Denied);
        }
        Ok(())
    }

    pub fn engine_health(&self, actor_id: &str, api_key: &str) -> Result<Vec<EngineHealth>, AnalyserError> {
        self.authenticate(actor_id, api_key)?;
        let admin = self.admin.as_ref().ok_or(AnalyserError::NotSupported)?;
        Ok(admin.engine_health())
    }

    pub fn actor_history(
        &self,
        actor_id: &str,
        api_key: &str,
        subject: &str,
        limit: usize,
    ) -> Result<Vec<HistoryRecord>, AnalyserError> {
        self.authenticate(actor_id, api_key)?;
        self.history
            .recent(subject, limit)
            .map_err(|e| AnalyserError::Unavailable(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap as Map;

    use crate::admin::AdminConfig;
    use crate::clock::ManualClock;
    use crate::engine::{CheckLatency, EngineContext, FaultInjection, PolicyEngine};
    use crate::history::PlainHistoryTable;
    use crate::model::{failure_codes, AccessRight, Actor, CheckCategory, EngineId};
    use crate::pm::TemperaturePm;
    use crate::validators::{default_rules, ActorDirectory, BehaviorPolicy, VulnerabilityStore};

    const SECRET: &str = "edge-secret";

    struct World {
        pep: Arc<Pep>,
        admin: Arc<PolicyAdmin>,
        engines: Vec<Arc<PolicyEngine>>,
        temp_pm: Arc<TemperaturePm>,
        history: Arc<PlainHistoryTable>,
        directory: Arc<ActorDirectory>,
        metrics: Arc<Metrics>,
        clock: Arc<ManualClock>,
    }

    fn world(engine_count: usize, latency: CheckLatency, overhead_ms: u64) -> World {
        let clock = ManualClock::at(50_000);
        let directory = ActorDirectory::new();
        directory
            .create(Actor::stationary(
                "sensor-1",
                "sensor-key",
                vec![
                    AccessRight::new(RequestKind::Write, "temperature"),
                    AccessRight::new(RequestKind::Read, "temperature"),
                ],
                "10.0.0.1",
                "aa:bb:cc:dd:ee:01",
            ))
            .unwrap();
        directory
            .create(Actor::user("guest", "guest-key", Vec::new()))
            .unwrap();
        let history = PlainHistoryTable::new();

        let ctx = EngineContext {
            directory: DirectoryReader::new(Arc::clone(&directory)),
            vulnerabilities: VulnerabilityStore::new(),
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
            managers.clone(),
            history.clone(),
            AdminConfig::default(),
            clock.clone(),
            Arc::clone(&metrics),
        );
        let pep = Pep::new(
            PepMode::ZeroTrust { admin: Arc::clone(&admin), broker },
            managers,
            SECRET,
            Duration::from_millis(overhead_ms),
            clock.clone(),
            Arc::clone(&metrics),
        );

        World { pep, admin, engines, temp_pm, history, directory, metrics, clock }
    }

    fn sensor_header() -> String {
        RequesterContext {
            agent: "fw/2.4".into(),
            actor: "sensor-1".into(),
            ip_address: "10.0.0.1".into(),
            mac_address: "aa:bb:cc:dd:ee:01".into(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
            auth_token: "sensor-key".into(),
        }
        .to_header_value()
    }

    fn guest_header() -> String {
        RequesterContext {
            agent: "fw/2.4".into(),
            actor: "guest".into(),
            ip_address: "10.9.9.9".into(),
            mac_address: "aa:bb:cc:dd:ee:99".into(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
            auth_token: "guest-key".into(),
        }
        .to_header_value()
    }

    fn write(value: &str) -> RawRequest {
        RawRequest {
            kind: RequestKind::Write,
            resource: "temperature".into(),
            parameters: [("value".to_string(), value.to_string())].into(),
        }
    }

    fn read_own() -> RawRequest {
        RawRequest {
            kind: RequestKind::Read,
            resource: "temperature".into(),
            parameters: [("actor_id".to_string(), "sensor-1".to_string())].into(),
        }
    }

    #[tokio::test]
    async fn write_is_acknowledged_before_the_effect_and_applied_after() {
        let w = world(3, CheckLatency::none(), 0);
        let response = w.pep.admit(&sensor_header(), SECRET, write("18.5")).await.unwrap();
        assert!(matches!(response, GatewayResponse::Accepted { .. }));
        // Accepted is not yet applied; drain the pipeline and check the store.
        w.admin.gauge().quiesce().await;
        w.pep.gauge().quiesce().await;
        let readings = w.temp_pm.all_readings();
        assert_eq!(readings.len(), 1);
        assert_eq!(readings[0].value, 18.5);
        assert_eq!(readings[0].actor_id, "sensor-1");
        assert_eq!(w.metrics.snapshot().requests_accepted_async, 1);
        assert_eq!(w.metrics.snapshot().requests_granted, 1);
    }

    #[tokio::test]
    async fn read_is_synchronous_and_returns_data() {
        let w = world(3, CheckLatency::none(), 0);
        w.pep.admit(&sensor_header(), SECRET, write("18.5")).await.unwrap();
        w.admin.gauge().quiesce().await;
        w.pep.gauge().quiesce().await;

        let response = w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        let GatewayResponse::Granted { data, .. } = response else {
            panic!("expected granted, got {response:?}");
        };
        let readings = data.readings().expect("read returns readings");
        assert_eq!(readings.len(), 1);
        assert_eq!(readings[0].value, 18.5);
    }

    #[tokio::test]
    async fn wrong_client_secret_never_reaches_validation() {
        let w = world(3, CheckLatency::none(), 0);
        let err = w.pep.admit(&sensor_header(), "stolen", write("1")).await.unwrap_err();
        assert_eq!(err, GatewayError::BadClientSecret);
        assert_eq!(w.metrics.snapshot().requests_admitted, 0);
        assert_eq!(w.metrics.snapshot().consensus_rounds, 0);
    }

    #[tokio::test]
    async fn malformed_header_is_refused_at_the_gate() {
        let w = world(3, CheckLatency::none(), 0);
        let err = w.pep.admit("{not json", SECRET, read_own()).await.unwrap_err();
        assert!(matches!(err, GatewayError::Header(HeaderError::MalformedSyntax(_))));

        let no_token = RequesterContext {
            agent: "a".into(),
            actor: "sensor-1".into(),
            ip_address: "10.0.0.1".into(),
            mac_address: "aa:bb:cc:dd:ee:01".into(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
            auth_token: String::new(),
        }
        .to_header_value();
        let err = w.pep.admit(&no_token, SECRET, read_own()).await.unwrap_err();
        assert_eq!(err, GatewayError::MissingCredentials("auth_token"));
    }

    #[tokio::test]
    async fn rejected_request_never_touches_the_manager() {
        let w = world(3, CheckLatency::none(), 0);
        // `guest` holds no rights on temperature.
        let response = w.pep.admit(&guest_header(), SECRET, read_own()).await.unwrap();
        let GatewayResponse::Rejected { report, infrastructure, .. } = response else {
            panic!("expected rejection, got {response:?}");
        };
        assert!(infrastructure.is_none(), "policy rejection, not an outage");
        let identity = report.iter().find(|r| r.check == CheckCategory::Identity).unwrap();
        assert!(identity
            .failures
            .iter()
            .any(|f| f.code == failure_codes::INSUFFICIENT_RIGHTS));

        assert_eq!(w.temp_pm.executions(), 0, "rejection isolation");
        assert_eq!(w.temp_pm.pending_tokens(), 0);
        assert_eq!(w.metrics.snapshot().tokens_issued, 0);
    }

    #[tokio::test]
    async fn directory_outage_rejects_with_infrastructure_evidence() {
        let w = world(3, CheckLatency::none(), 0);
        w.directory.set_available(false);
        let response = w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        let GatewayResponse::Rejected { report, .. } = response else {
            panic!("expected fail-closed rejection, got {response:?}");
        };
        // The engines still decided (reject), with the outage as evidence.
        let identity = report.iter().find(|r| r.check == CheckCategory::Identity).unwrap();
        assert_eq!(identity.failures[0].code, failure_codes::INFRASTRUCTURE_UNAVAILABLE);
        assert_eq!(w.temp_pm.executions(), 0);
    }

    #[tokio::test]
    async fn undecidable_round_fails_closed_with_infrastructure_flag() {
        let w = world(2, CheckLatency::none(), 0);
        w.engines[0].set_compromised(true).unwrap();
        let response = w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        let GatewayResponse::Rejected { report, infrastructure, .. } = response else {
            panic!("expected rejection, got {response:?}");
        };
        assert!(report.is_empty());
        assert!(infrastructure.unwrap().contains("consensus failed"));
    }

    #[tokio::test(start_paused = true)]
    async fn admission_overhead_is_paid_before_validation() {
        let w = world(1, CheckLatency::none(), 5);
        let started = tokio::time::Instant::now();
        let response = w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        assert!(response.is_admitted_success());
        assert_eq!(started.elapsed(), Duration::from_millis(5));
    }

    #[tokio::test(start_paused = true)]
    async fn async_ack_does_not_wait_for_slow_engines() {
        // 4 × 50ms of checks per engine, but the ack must cost only the
        // admission overhead.
        let w = world(3, CheckLatency::uniform(50), 5);
        let started = tokio::time::Instant::now();
        let response = w.pep.admit(&sensor_header(), SECRET, write("30.1")).await.unwrap();
        assert!(matches!(response, GatewayResponse::Accepted { .. }));
        assert_eq!(started.elapsed(), Duration::from_millis(5));

        // The verdict lands later, once the engines have done their work.
        w.admin.gauge().quiesce().await;
        w.pep.gauge().quiesce().await;
        assert_eq!(w.temp_pm.all_readings().len(), 1);
        assert!(started.elapsed() >= Duration::from_millis(5 + 200));
    }

    #[tokio::test(start_paused = true)]
    async fn sync_read_waits_for_a_full_consensus_round() {
        let w = world(3, CheckLatency::uniform(50), 5);
        let started = tokio::time::Instant::now();
        let response = w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        assert!(matches!(response, GatewayResponse::Granted { .. }));
        assert_eq!(started.elapsed(), Duration::from_millis(5 + 200));
    }

    #[tokio::test]
    async fn conventional_mode_checks_identity_once_and_trusts() {
        let clock = ManualClock::at(1_000);
        let directory = ActorDirectory::new();
        directory
            .create(Actor::stationary(
                "sensor-1",
                "sensor-key",
                vec![
                    AccessRight::new(RequestKind::Write, "temperature"),
                    AccessRight::new(RequestKind::Read, "temperature"),
                ],
                "10.0.0.1",
                "aa:bb:cc:dd:ee:01",
            ))
            .unwrap();
        directory.create(Actor::user("guest", "guest-key", Vec::new())).unwrap();

        let temp_pm = TemperaturePm::new(clock.clone());
        let mut managers: Map<String, Arc<dyn PersistenceManager>> = Map::new();
        managers.insert("temperature".into(), Arc::clone(&temp_pm) as _);
        let metrics = Arc::new(Metrics::default());
        let pep = Pep::new(
            PepMode::Conventional { directory: DirectoryReader::new(directory) },
            managers,
            SECRET,
            Duration::ZERO,
            clock,
            Arc::clone(&metrics),
        );

        // A write is synchronous here — no pipeline to hand it to.
        let response = pep.admit(&sensor_header(), SECRET, write("44.0")).await.unwrap();
        assert!(matches!(response, GatewayResponse::Granted { .. }));
        assert_eq!(temp_pm.all_readings().len(), 1);
        // No token machinery anywhere.
        assert_eq!(temp_pm.pending_tokens(), 0);
        assert_eq!(metrics.snapshot().tokens_issued, 0);
        assert_eq!(metrics.snapshot().consensus_rounds, 0);

        // But a malformed value sails straight through — nothing checks it.
        let response = pep.admit(&sensor_header(), SECRET, write("not-a-number")).await.unwrap();
        let GatewayResponse::Rejected { infrastructure, .. } = &response else {
            panic!("the manager itself refuses garbage, got {response:?}");
        };
        assert!(infrastructure.is_some());

        // Identity is still enforced at the perimeter.
        let response = pep.admit(&guest_header(), SECRET, read_own()).await.unwrap();
        assert!(matches!(response, GatewayResponse::Rejected { .. }));
        assert_eq!(temp_pm.executions(), 1);
    }

    #[tokio::test]
    async fn client_component_overwrites_claimed_network_identity() {
        let client = ClientComponent::new(ClientProfile {
            agent: "fw/2.4".into(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
        });
        let connection = Connection {
            ip_address: "10.0.0.7".into(),
            mac_address: "aa:bb:cc:dd:ee:07".into(),
        };
        let header = client.header_for("sensor-1", "sensor-key", &connection).unwrap();
        let parsed = RequesterContext::parse(&header).unwrap();
        assert_eq!(parsed.ip_address, "10.0.0.7");
        assert_eq!(parsed.mac_address, "aa:bb:cc:dd:ee:07");
        assert_eq!(parsed.agent, "fw/2.4");
        assert_eq!(parsed.os_id, "sensor-os");

        let err = client.header_for("sensor-1", "", &connection).unwrap_err();
        assert_eq!(err, ClientError::MissingCredentials("auth_token"));
    }

    #[tokio::test]
    async fn analyser_requires_the_analyser_admin_right() {
        let w = world(3, CheckLatency::none(), 0);
        w.directory
            .create(Actor::user(
                "root-admin",
                "root-key",
                vec![AccessRight::new(RequestKind::Admin, "analyser")],
            ))
            .unwrap();

        let analyser = Analyser::new(
            DirectoryReader::new(Arc::clone(&w.directory)),
            w.history.clone(),
            Some(Arc::clone(&w.admin)),
        );

        let health = analyser.engine_health("root-admin", "root-key").unwrap();
        assert_eq!(health.len(), 3);
        assert!(health.iter().all(|h| !h.compromised));

        w.engines[1].set_compromised(true).unwrap();
        let health = analyser.engine_health("root-admin", "root-key").unwrap();
        assert_eq!(health.iter().filter(|h| h.compromised).count(), 1);

        assert_eq!(
            analyser.engine_health("root-admin", "wrong-key").unwrap_err(),
            AnalyserError::Denied
        );
        assert_eq!(
            analyser.engine_health("sensor-1", "sensor-key").unwrap_err(),
            AnalyserError::Denied
        );
        assert_eq!(
            analyser.engine_health("nobody", "key").unwrap_err(),
            AnalyserError::Denied
        );
    }

    #[tokio::test]
    async fn analyser_reads_actor_history_from_the_decision_log() {
        let w = world(3, CheckLatency::none(), 0);
        w.directory
            .create(Actor::user(
                "root-admin",
                "root-key",
                vec![AccessRight::new(RequestKind::Admin, "analyser")],
            ))
            .unwrap();
        w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        w.pep.admit(&guest_header(), SECRET, read_own()).await.unwrap();
        w.admin.gauge().quiesce().await;

        let analyser = Analyser::new(
            DirectoryReader::new(Arc::clone(&w.directory)),
            w.history.clone(),
            Some(Arc::clone(&w.admin)),
        );
        let sensor_history = analyser
            .actor_history("root-admin", "root-key", "sensor-1", 10)
            .unwrap();
        assert_eq!(sensor_history.len(), 1);
        assert_eq!(sensor_history[0].outcome, Outcome::Grant);

        let guest_history = analyser
            .actor_history("root-admin", "root-key", "guest", 10)
            .unwrap();
        assert_eq!(guest_history.len(), 1);
        assert_eq!(guest_history[0].outcome, Outcome::Reject);
    }

    #[tokio::test]
    async fn only_grants_consume_clock_time_for_tokens() {
        // Issued-at must come from the shared clock so expiry math lines up
        // with the manager's view.
        let w = world(1, CheckLatency::none(), 0);
        w.clock.set(123_456);
        let response = w.pep.admit(&sensor_header(), SECRET, read_own()).await.unwrap();
        assert!(matches!(response, GatewayResponse::Granted { .. }));
        w.admin.gauge().quiesce().await;
        let record = &w.history.all()[0];
        assert_eq!(record.timestamp, 123_456);
    }
}
