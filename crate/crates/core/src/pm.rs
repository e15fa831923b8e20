//! Persistence managers: the only components that touch stored data.
//!
//! Each manager owns one resource. It accepts work exclusively against a
//! token that the policy administrator registered with it beforehand —
//! unknown, expired, out-of-scope or already-spent tokens are refused, so a
//! token issued for one manager is worthless at every other. The trusted
//! execution path (no token) exists solely for the conventional-security
//! deployment used as a benchmark baseline.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::model::{
    AccessRequest, AccessRight, AccessToken, Actor, ActorRole, RequestId, RequestKind,
};
use crate::validators::{
    ActorDirectory, AddOutcome, DirectoryError, StoreUnavailable, VersionSpec, Vulnerability,
    VulnerabilityStore,
};

/// Why a persistence manager refused or failed a request.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PmError {
    /// No token with that secret is registered here. Also the answer for a
    /// replayed token: spent secrets are indistinguishable from unknown ones.
    #[error("unknown access token")]
    UnknownToken,
    #[error("access token expired")]
    ExpiredToken,
    /// The token is real but does not cover this operation on this resource.
    #[error("access token does not cover this operation")]
    InsufficientRights,
    /// The request passed validation upstream but the manager cannot act on
    /// it (wrong resource, unsupported op, bad payload).
    #[error("unsupported action: {0}")]
    UnsupportedAction(String),
    #[error("duplicate actor `{0}`")]
    DuplicateActor(String),
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
    #[error("invalid actor specification: {0}")]
    InvalidActorSpec(String),
    #[error(transparent)]
    StoreUnavailable(#[from] StoreUnavailable),
}

/// Successful manager output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PmOutput {
    /// The action was applied; nothing to return.
    Ack,
    /// Readings returned by a sensor-data read.
    Readings(Vec<TemperatureReading>),
}

impl PmOutput {
    pub fn readings(&self) -> Option<&[TemperatureReading]> {
        match self {
            Self::Readings(r) => Some(r),
            Self::Ack => None,
        }
    }
}

/// One stored sensor reading. Values are range-checked upstream by the usage
/// check before any token is issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureReading {
    pub reading_id: String,
    /// The actor that submitted the reading.
    pub actor_id: String,
    pub value: f64,
    /// Milliseconds since the epoch at storage time.
    pub recorded_at: u64,
}

/// Audit trail entry kept by every manager.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub request_id: RequestId,
    pub event: AuditEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    TokenRegistered,
    Executed,
    Refused,
}

/// A token as registered by the administrator, pinned to the request it was
/// issued for.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRegistration {
    pub request_id: RequestId,
    pub token: AccessToken,
}

/// The token checkpoint every manager guards its storage with. Verification
/// consumes the token: a second presentation of the same secret fails.
#[derive(Debug)]
struct TokenGate {
    resource: &'static str,
    tokens: Mutex<HashMap<String, TokenRegistration>>,
    clock: Arc<dyn Clock>,
}

impl TokenGate {
    fn new(resource: &'static str, clock: Arc<dyn Clock>) -> Self {
        Self { resource, tokens: Mutex::new(HashMap::new()), clock }
    }

    fn register(&self, registration: TokenRegistration) {
        let mut tokens = self.tokens.lock().unwrap();
        tokens.insert(registration.token.secret.clone(), registration);
    }

    /// Checks secret, expiry and scope, consuming the token on success.
    fn verify_and_consume(
        &self,
        secret: &str,
        kind: RequestKind,
    ) -> Result<TokenRegistration, PmError> {
        let mut tokens = self.tokens.lock().unwrap();
        // Peek first: an expired token stays consumed only when we say so.
        let registration = tokens.get(secret).ok_or(PmError::UnknownToken)?;
        if registration.token.is_expired(self.clock.now_millis()) {
            tokens.remove(secret);
            return Err(PmError::ExpiredToken);
        }
        if !registration.token.allows(kind, self.resource) {
            return Err(PmError::InsufficientRights);
        }
        Ok(tokens.remove(secret).expect("present under lock"))
    }

    fn pending(&self) -> usize {
        self.tokens.lock().unwrap().len()
    }
}

/// Interface of every persistence manager.
#[async_trait]
pub trait PersistenceManager: Send + Sync + std::fmt::Debug {
    /// The resource this manager owns.
    fn resource(&self) -> &'static str;

    /// Ahead-of-grant token registration by the administrator.
    fn register_token(&self, registration: TokenRegistration);

    /// Token-gated execution: verify and consume the token, then act.
    async fn execute(&self, token_secret: &str, request: &AccessRequest)
        -> Result<PmOutput, PmError>;

    /// Tokenless execution for the conventional baseline deployment.
    async fn execute_trusted(&self, request: &AccessRequest) -> Result<PmOutput, PmError>;

    /// How many storage-touching executions happened (granted work only).
    fn executions(&self) -> u64;

    /// Chronological audit of registrations, executions and refusals.
    fn audit_log(&self) -> Vec<AuditEntry>;

    /// Tokens registered but not yet spent.
    fn pending_tokens(&self) -> usize;
}

/// Common bookkeeping shared by the concrete managers.
#[derive(Debug)]
struct PmCore {
    gate: TokenGate,
    executions: AtomicU64,
    audit: Mutex<Vec<AuditEntry>>,
}

impl PmCore {
    fn new(resource: &'static str, clock: Arc<dyn Clock>) -> Self {
        Self {
            gate: TokenGate::new(resource, clock),
            executions: AtomicU64::new(0),
            audit: Mutex::new(Vec::new()),
        }
    }

    fn log(&self, request_id: RequestId, event: AuditEvent) {
        self.audit.lock().unwrap().push(AuditEntry { request_id, event });
    }

    fn register(&self, registration: TokenRegistration) {
        self.log(registration.request_id.clone(), AuditEvent::TokenRegistered);
        self.gate.register(registration);
    }

    /// Runs the token gate and records the outcome against the request.
    fn admit(
        &self,
        secret: &str,
        request: &AccessRequest,
    ) -> Result<TokenRegistration, PmError> {
        match self.gate.verify_and_consume(secret, request.kind) {
            Ok(registration) => Ok(registration),
            Err(e) => {
                self.log(request.request_id.clone(), AuditEvent::Refused);
                Err(e)
            }
        }
    }

    fn executed(&self, request_id: &RequestId) {
        self.executions.fetch_add(1, Ordering::SeqCst);
        self.log(request_id.clone(), AuditEvent::Executed);
    }
}

// ---------------------------------------------------------------------------
// TEMP-PM: sensor readings
// ---------------------------------------------------------------------------

/// Manager for the `temperature` resource: append readings, read them back
/// per actor. Storage access is serialized, so concurrent writers cannot
/// lose updates.
#[derive(Debug)]
pub struct TemperaturePm {
    core: PmCore,
    readings: Mutex<Vec<TemperatureReading>>,
    clock: Arc<dyn Clock>,
}

impl TemperaturePm {
    pub const RESOURCE: &'static str = "temperature";

    pub fn new(clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self {
            core: PmCore::new(Self::RESOURCE, Arc::clone(&clock)),
            readings: Mutex::new(Vec::new()),
            clock,
        })
    }

    fn apply(&self, request: &AccessRequest) -> Result<PmOutput, PmError> {
        match request.kind {
            RequestKind::Write => {
                let raw = request
                    .parameter("value")
                    .ok_or_else(|| PmError::UnsupportedAction("missing `value`".into()))?;
                let value: f64 = raw
                    .parse()
                    .map_err(|_| PmError::UnsupportedAction(format!("bad value `{raw}`")))?;
                let reading = TemperatureReading {
                    reading_id: uuid::Uuid::new_v4().to_string(),
                    actor_id: request.requester.actor.clone(),
                    value,
                    recorded_at: self.clock.now_millis(),
                };
                self.readings.lock().unwrap().push(reading);
                Ok(PmOutput::Ack)
            }
            RequestKind::Read => {
                let actor_id = request
                    .parameter("actor_id")
                    .ok_or_else(|| PmError::UnsupportedAction("missing `actor_id`".into()))?;
                let limit = match request.parameter("limit") {
                    None => usize::MAX,
                    Some(raw) => raw
                        .parse()
                        .map_err(|_| PmError::UnsupportedAction(format!("bad limit `{raw}`")))?,
                };
                let readings = self.readings.lock().unwrap();
                let matching: Vec<TemperatureReading> = readings
                    .iter()
                    .filter(|r| r.actor_id == actor_id)
                    .take(limit)
                    .cloned()
                    .collect();
                Ok(PmOutput::Readings(matching))
            }
            RequestKind::Admin => {
                Err(PmError::UnsupportedAction("temperature has no admin operations".into()))
            }
        }
    }

    /// Test/report helper: all stored readings in insertion order.
    pub fn all_readings(&self) -> Vec<TemperatureReading> {
        self.readings.lock().unwrap().clone()
    }
}

#[async_trait]
impl PersistenceManager for TemperaturePm {
    fn resource(&self) -> &'static str {
        Self::RESOURCE
    }

    fn register_token(&self, registration: TokenRegistration) {
        self.core.register(registration);
    }

    async fn execute(
        &self,
        token_secret: &str,
        request: &AccessRequest,
    ) -> Result<PmOutput, PmError> {
        self.core.admit(token_secret, request)?;
        let output = self.apply(request)?;
        self.core.executed(&request.request_id);
        Ok(output)
    }

    async fn execute_trusted(&self, request: &AccessRequest) -> Result<PmOutput, PmError> {
        let output = self.apply(request)?;
        self.core.executed(&request.request_id);
        Ok(output)
    }

    fn executions(&self) -> u64 {
        self.core.executions.load(Ordering::SeqCst)
    }

    fn audit_log(&self) -> Vec<AuditEntry> {
        self.core.audit.lock().unwrap().clone()
    }

    fn pending_tokens(&self) -> usize {
        self.core.gate.pending()
    }
}

// ---------------------------------------------------------------------------
// AUTH-PM: actor directory management
// ---------------------------------------------------------------------------

/// Manager for the `actors` resource: create, update and delete directory
/// entries. The only component holding mutation access to the directory.
#[derive(Debug)]
pub struct AuthPm {
    core: PmCore,
    directory: Arc<ActorDirectory>,
}

impl AuthPm {
    pub const RESOURCE: &'static str = "actors";

    pub fn new(directory: Arc<ActorDirectory>, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self { core: PmCore::new(Self::RESOURCE, clock), directory })
    }

    fn build_actor(request: &AccessRequest, existing: Option<Actor>) -> Result<Actor, PmError> {
        let actor_id = request
            .parameter("actor_id")
            .ok_or_else(|| PmError::InvalidActorSpec("missing `actor_id`".into()))?;

        let role = match (request.parameter("role"), &existing) {
            (Some("user"), _) => ActorRole::User,
            (Some("stationary"), _) => ActorRole::Stationary,
            (Some(other), _) => {
                return Err(PmError::InvalidActorSpec(format!("unknown role `{other}`")))
            }
            (None, Some(actor)) => actor.role,
            (None, None) => return Err(PmError::InvalidActorSpec("missing `role`".into())),
        };

        let rights = match request.parameter("rights") {
            Some(raw) => AccessRight::parse_list(raw)
                .ok_or_else(|| PmError::InvalidActorSpec(format!("bad rights `{raw}`")))?,
            None => existing.as_ref().map(|a| a.access_rights.clone()).unwrap_or_default(),
        };

        let api_key = request
            .parameter("api_key")
            .map(str::to_owned)
            .or_else(|| existing.as_ref().map(|a| a.api_key.clone()))
            .ok_or_else(|| PmError::InvalidActorSpec("missing `api_key`".into()))?;

        let pick = |name: &str, old: Option<&String>| -> Option<String> {
            request.parameter(name).map(str::to_owned).or_else(|| old.cloned())
        };
        let actor = Actor {
            actor_id: actor_id.to_owned(),
            role,
            access_rights: rights,
            api_key,
            ip_address: pick("ip_address", existing.as_ref().and_then(|a| a.ip_address.as_ref())),
            mac_address: pick(
                "mac_address",
                existing.as_ref().and_then(|a| a.mac_address.as_ref()),
            ),
            blocked_until: existing.as_ref().and_then(|a| a.blocked_until),
        };
        actor
            .validate()
            .map_err(|e| PmError::InvalidActorSpec(e.to_string()))?;
        Ok(actor)
    }

    fn apply(&self, request: &AccessRequest) -> Result<PmOutput, PmError> {
        if request.kind != RequestKind::Admin {
            return Err(PmError::UnsupportedAction(
                "actors accepts only ADMIN operations".into(),
            ));
        }
        let op = request
            .parameter("op")
            .ok_or_else(|| PmError::UnsupportedAction("missing `op`".into()))?;
        let map_dir_err = |e: DirectoryError| match e {
            DirectoryError::DuplicateActor(id) => PmError::DuplicateActor(id),
            DirectoryError::UnknownActor(id) => PmError::UnknownActor(id),
            DirectoryError::Unavailable(e) => PmError::StoreUnavailable(e),
        };

        match op {
            "create" => {
                let actor = Self::build_actor(request, None)?;
                self.directory.create(actor).map_err(map_dir_err)?;
            }
            "update" => {
                let actor_id = request
                    .parameter("actor_id")
                    .ok_or_else(|| PmError::InvalidActorSpec("missing `actor_id`".into()))?;
                let existing = self
                    .directory
                    .get(actor_id)?
                    .ok_or_else(|| PmError::UnknownActor(actor_id.to_owned()))?;
                let actor = Self::build_actor(request, Some(existing))?;
                self.directory.update(actor).map_err(map_dir_err)?;
            }
            "delete" => {
                let actor_id = request
                    .parameter("actor_id")
                    .ok_or_else(|| PmError::InvalidActorSpec("missing `actor_id`".into()))?;
                self.directory.delete(actor_id).map_err(map_dir_err)?;
            }
            other => {
                return Err(PmError::UnsupportedAction(format!("unknown op `{other}`")));
            }
        }
        Ok(PmOutput::Ack)
    }
}

#[async_trait]
impl PersistenceManager for AuthPm {
    fn resource(&self) -> &'static str {
        Self::RESOURCE
    }

    fn register_token(&self, registration: TokenRegistration) {
        self.core.register(registration);
    }

    async fn execute(
        &self,
        token_secret: &str,
        request: &AccessRequest,
    ) -> Result<PmOutput, PmError> {
        self.core.admit(token_secret, request)?;
        let output = self.apply(request)?;
        self.core.executed(&request.request_id);
        Ok(output)
    }

    async fn execute_trusted(&self, request: &AccessRequest) -> Result<PmOutput, PmError> {
        let output = self.apply(request)?;
        self.core.executed(&request.request_id);
        Ok(output)
    }

    fn executions(&self) -> u64 {
        self.core.executions.load(Ordering::SeqCst)
    }

    fn audit_log(&self) -> Vec<AuditEntry> {
        self.core.audit.lock().unwrap().clone()
    }

    fn pending_tokens(&self) -> usize {
        self.core.gate.pending()
    }
}

// ---------------------------------------------------------------------------
// OSV-PM: vulnerability registry management
// ---------------------------------------------------------------------------

/// Manager for the `vulnerabilities` resource: administrative insertion of
/// known-bad OS configurations consulted by the environment check.
#[derive(Debug)]
pub struct VulnerabilityPm {
    core: PmCore,
    store: Arc<VulnerabilityStore>,
}

impl VulnerabilityPm {
    pub const RESOURCE: &'static str = "vulnerabilities";

    pub fn new(store: Arc<VulnerabilityStore>, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self { core: PmCore::new(Self::RESOURCE, clock), store })
    }

    fn apply(&self, request: &AccessRequest) -> Result<PmOutput, PmError> {
        if request.kind != RequestKind::Admin {
            return Err(PmError::UnsupportedAction(
                "vulnerabilities accepts only ADMIN operations".into(),
            ));
        }
        match request.parameter("op") {
            Some("add") => {}
            Some(other) => {
                return Err(PmError::UnsupportedAction(format!("unknown op `{other}`")))
            }
            None => return Err(PmError::UnsupportedAction("missing `op`".into())),
        }

        let field = |name: &str| -> Result<&str, PmError> {
            request
                .parameter(name)
                .ok_or_else(|| PmError::UnsupportedAction(format!("missing `{name}`")))
        };
        let spec_raw = field("affected_versions")?;
        let affected_versions = VersionSpec::parse(spec_raw)
            .ok_or_else(|| PmError::UnsupportedAction(format!("bad version spec `{spec_raw}`")))?;
        let severity_raw = field("severity")?;
        let severity = crate::model::Severity::parse(severity_raw)
            .ok_or_else(|| PmError::UnsupportedAction(format!("bad severity `{severity_raw}`")))?;

        let vulnerability = Vulnerability {
            os_id: field("os_id")?.to_owned(),
            affected_versions,
            severity,
            description: request.parameter("description").unwrap_or_default().to_owned(),
        };
        // Duplicate insertion is idempotent by design.
        let _: AddOutcome = self.store.add(vulnerability)?;
        Ok(PmOutput::Ack)
    }
}

#[async_trait]
impl PersistenceManager for VulnerabilityPm {
    fn resource(&self) -> &'static str {
        Self::RESOURCE
    }

    fn register_token(&self, registration: TokenRegistration) {
        self.core.register(registration);
    }

    async fn execute(
        &self,
        token_secret: &str,
        request: &AccessRequest,
    ) -> Result<PmOutput, PmError> {
        self.core.admit(token_secret, request)?;
        let output = self.apply(request)?;
        self.core.executed(&request.request_id);
        Ok(output)
    }

    async fn execute_trusted(&self, request: &AccessRequest) -> Result<PmOutput, PmError> {
        let output = self.apply(request)?;
        self.core.executed(&request.request_id);
        Ok(output)
    }

    fn executions(&self) -> u64 {
        self.core.executions.load(Ordering::SeqCst)
    }

    fn audit_log(&self) -> Vec<AuditEntry> {
        self.core.audit.lock().unwrap().clone()
    }

    fn pending_tokens(&self) -> usize {
        self.core.gate.pending()
    }
}

/// Builds the standard manager set, keyed by resource.
pub fn standard_managers(
    directory: Arc<ActorDirectory>,
    store: Arc<VulnerabilityStore>,
    clock: Arc<dyn Clock>,
) -> BTreeMap<String, Arc<dyn PersistenceManager>> {
    let mut managers: BTreeMap<String, Arc<dyn PersistenceManager>> = BTreeMap::new();
    managers.insert(
        TemperaturePm::RESOURCE.to_owned(),
        TemperaturePm::new(Arc::clone(&clock)) as Arc<dyn PersistenceManager>,
    );
    managers.insert(AuthPm::RESOURCE.to_owned(), AuthPm::new(directory, Arc::clone(&clock)));
    managers.insert(VulnerabilityPm::RESOURCE.to_owned(), VulnerabilityPm::new(store, clock));
    managers
}
