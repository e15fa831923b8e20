//! Shared domain types: the requester identity envelope, access requests and
//! rights, check results with their severity algebra, and engine decisions.
//!
//! The severity algebra is the heart of the trust algorithm: every check
//! reports zero or more [`CheckFailure`]s, and a request is rejected exactly
//! when at least one failure is [`Severity::Critical`]. Sub-critical failures
//! ride along in the report so the requester learns about them without being
//! denied.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the HTTP header carrying the requester identity envelope.
pub const REQUESTER_HEADER: &str = "X-Requester";

/// The exact field set of the requester envelope, in canonical order.
pub const REQUESTER_FIELDS: [&str; 7] = [
    "agent",
    "actor",
    "ip_address",
    "mac_address",
    "os_id",
    "os_version",
    "auth_token",
];

/// Resources whose mutation is reserved for ADMIN requests.
pub const ADMIN_RESOURCES: [&str; 3] = ["actors", "vulnerabilities", "analyser"];

/// Identity envelope accompanying every request, serialized as the
/// `X-Requester` header: a flat JSON object with exactly the seven
/// [`REQUESTER_FIELDS`] keys, all strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequesterContext {
    /// Software agent issuing the request (e.g. a sensor firmware name).
    pub agent: String,
    /// Actor identifier registered in the actor directory.
    pub actor: String,
    /// Source IPv4 address as observed or reported.
    pub ip_address: String,
    /// Source MAC address as observed or reported.
    pub mac_address: String,
    /// Operating system identifier of the requesting device.
    pub os_id: String,
    /// Operating system version of the requesting device.
    pub os_version: String,
    /// Shared secret proving the actor's identity (API key).
    pub auth_token: String,
}

/// Failure parsing or validating a requester envelope.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeaderError {
    #[error("requester envelope is missing field `{0}`")]
    MissingField(&'static str),
    #[error("requester envelope has unknown field `{0}`")]
    UnknownField(String),
    #[error("requester envelope is malformed: {0}")]
    MalformedSyntax(String),
}

impl RequesterContext {
    /// Parses the wire form: a JSON object with exactly the seven expected
    /// string fields. Unknown and missing fields are hard errors — the
    /// envelope is a fixed contract, not an extensible bag.
    pub fn parse(text: &str) -> Result<Self, HeaderError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| HeaderError::MalformedSyntax(e.to_string()))?;
        let object = value
            .as_object()
            .ok_or_else(|| HeaderError::MalformedSyntax("not a JSON object".into()))?;

        for key in object.keys() {
            if !REQUESTER_FIELDS.contains(&key.as_str()) {
                return Err(HeaderError::UnknownField(key.clone()));
            }
        }

        let mut fields: [String; 7] = Default::default();
        for (slot, name) in fields.iter_mut().zip(REQUESTER_FIELDS) {
            let value = object.get(name).ok_or(HeaderError::MissingField(name))?;
            *slot = value
                .as_str()
                .ok_or_else(|| {
                    HeaderError::MalformedSyntax(format!("field `{name}` is not a string"))
                })?
                .to_owned();
        }
        let [agent, actor, ip_address, mac_address, os_id, os_version, auth_token] = fields;
        Ok(Self { agent, actor, ip_address, mac_address, os_id, os_version, auth_token })
    }

    /// Serializes to the wire form with fields in canonical order.
    pub fn to_header_value(&self) -> String {
        serde_json::to_string(self).expect("string-only struct serializes")
    }
}

/// What a request wants to do with a resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RequestKind {
    Read,
    Write,
    Admin,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Read => "READ",
            Self::Write => "WRITE",
            Self::Admin => "ADMIN",
        }
    }

    /// Case-insensitive parse of the wire names.
    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_uppercase().as_str() {
            "READ" => Some(Self::Read),
            "WRITE" => Some(Self::Write),
            "ADMIN" => Some(Self::Admin),
            _ => None,
        }
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a request is routed through the administrator.
///
/// Writes to ordinary resources are acknowledged immediately and validated in
/// the background; reads and administrative changes block until decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RouteClass {
    Sync,
    Async,
}

/// True for resources that only ADMIN requests may mutate.
pub fn is_admin_resource(resource: &str) -> bool {
    ADMIN_RESOURCES.contains(&resource)
}

/// Routing rule: WRITE to a non-administrative resource is ASYNC, everything
/// else (reads, admin mutations) is SYNC.
pub fn classify(kind: RequestKind, resource: &str) -> RouteClass {
    match kind {
        RequestKind::Write if !is_admin_resource(resource) => RouteClass::Async,
        _ => RouteClass::Sync,
    }
}

/// Unique identifier a request receives when it is admitted at the
/// enforcement point; threads through validation, tokens, and the ledger.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub String);

impl RequestId {
    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier of a policy engine replica.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EngineId(pub String);

impl EngineId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A fully admitted access request: the raw request description plus the
/// requester envelope and admission metadata. This is the one object that
/// flows from the enforcement point through validation to the persistence
/// managers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRequest {
    pub request_id: RequestId,
    pub kind: RequestKind,
    /// Target resource name, e.g. `temperature` or `actors`.
    pub resource: String,
    /// Request parameters; a sorted map so serialization is canonical.
    pub parameters: BTreeMap<String, String>,
    pub requester: RequesterContext,
    /// Milliseconds since the epoch at admission.
    pub received_at: u64,
}

impl AccessRequest {
    pub fn route(&self) -> RouteClass {
        classify(self.kind, &self.resource)
    }

    pub fn parameter(&self, name: &str) -> Option<&str> {
        self.parameters.get(name).map(String::as_str)
    }
}

/// Immutable validation payload handed to every policy engine.
///
/// The canonical serialization is computed once at admission; engines and
/// tests can compare it byte-for-byte to confirm nobody mutated the request
/// mid-flight.
#[derive(Debug, Clone)]
pub struct ValidationPayload {
    request: Arc<AccessRequest>,
    canonical: Arc<str>,
}

impl ValidationPayload {
    pub fn new(request: AccessRequest) -> Self {
        let canonical = serde_json::to_string(&request).expect("request serializes");
        Self { request: Arc::new(request), canonical: canonical.into() }
    }

    pub fn request(&self) -> &AccessRequest {
        &self.request
    }

    pub fn requester(&self) -> &RequesterContext {
        &self.request.requester
    }

    pub fn request_id(&self) -> &RequestId {
        &self.request.request_id
    }

    /// Canonical JSON of the admitted request, fixed at admission time.
    pub fn canonical_json(&self) -> &str {
        &self.canonical
    }
}

/// How bad a single check failure is. Ordered: `Low < Moderate < High <
/// Critical`. Only `Critical` forces rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Low,
    Moderate,
    High,
    Critical,
}

impl Severity {
    pub const ALL: [Severity; 4] =
        [Severity::Low, Severity::Moderate, Severity::High, Severity::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "LOW",
            Self::Moderate => "MODERATE",
            Self::High => "HIGH",
            Self::Critical => "CRITICAL",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_uppercase().as_str() {
            "LOW" => Some(Self::Low),
            "MODERATE" => Some(Self::Moderate),
            "HIGH" => Some(Self::High),
            "CRITICAL" => Some(Self::Critical),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The four stages of the trust algorithm, in the order engines run them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CheckCategory {
    /// Who is asking: directory lookup, credential and address match, rights.
    Identity,
    /// What they run: known vulnerabilities for the reported OS and version.
    Environment,
    /// What they ask: syntactic and semantic request/parameter validation.
    Usage,
    /// How they behaved: recent decision history and temporary blocks.
    Behavior,
}

impl CheckCategory {
    pub const ALL: [CheckCategory; 4] = [
        CheckCategory::Identity,
        CheckCategory::Environment,
        CheckCategory::Usage,
        CheckCategory::Behavior,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Identity => "IDENTITY",
            Self::Environment => "ENVIRONMENT",
            Self::Usage => "USAGE",
            Self::Behavior => "BEHAVIOR",
        }
    }
}

impl fmt::Display for CheckCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Well-known failure codes emitted by the checks. Codes are stable strings
/// so reports stay greppable across versions.
pub mod failure_codes {
    pub const UNKNOWN_ACTOR: &str = "unknown_actor";
    pub const AUTH_TOKEN_MISMATCH: &str = "auth_token_mismatch";
    pub const INSUFFICIENT_RIGHTS: &str = "insufficient_rights";
    pub const IP_MISMATCH: &str = "ip_mismatch";
    pub const MAC_MISMATCH: &str = "mac_mismatch";
    pub const OS_VULNERABILITY: &str = "os_vulnerability";
    pub const UNVALIDATABLE_REQUEST: &str = "unvalidatable_request";
    pub const MISSING_PARAMETER: &str = "missing_parameter";
    pub const MALFORMED_PARAMETER: &str = "malformed_parameter";
    pub const IMPLAUSIBLE_VALUE: &str = "implausible_value";
    pub const UNEXPECTED_PARAMETER: &str = "unexpected_parameter";
    pub const TEMPORARILY_BLOCKED: &str = "temporarily_blocked";
    pub const INFRASTRUCTURE_UNAVAILABLE: &str = "infrastructure_unavailable";
    pub const CONSENSUS_FAILED: &str = "consensus_failed";
}

/// One reason a check did not pass cleanly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckFailure {
    /// Stable machine-readable code, see [`failure_codes`].
    pub code: String,
    pub severity: Severity,
    /// Human-readable explanation included in the failure report.
    pub message: String,
}

impl CheckFailure {
    pub fn new(code: &str, severity: Severity, message: impl Into<String>) -> Self {
        Self { code: code.to_owned(), severity, message: message.into() }
    }
}

/// Outcome of one trust-algorithm stage.
///
/// Invariant: `passed` is true exactly when `failures` is empty. Use the
/// constructors; they cannot produce an inconsistent value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: CheckCategory,
    pub passed: bool,
    pub failures: Vec<CheckFailure>,
}

impl CheckResult {
    pub fn pass(check: CheckCategory) -> Self {
        Self { check, passed: true, failures: Vec::new() }
    }

    /// A failed check. Panics if `failures` is empty — a failure with no
    /// reasons would break the `passed ⟺ failures.is_empty()` invariant.
    pub fn fail(check: CheckCategory, failures: Vec<CheckFailure>) -> Self {
        assert!(!failures.is_empty(), "failed check must carry at least one failure");
        Self { check, passed: false, failures }
    }

    /// Builds pass or fail depending on whether any failures were collected.
    pub fn from_failures(check: CheckCategory, failures: Vec<CheckFailure>) -> Self {
        if failures.is_empty() {
            Self::pass(check)
        } else {
            Self::fail(check, failures)
        }
    }

    pub fn worst_severity(&self) -> Option<Severity> {
        self.failures.iter().map(|f| f.severity).max()
    }
}

/// Final verdict on a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Grant,
    Reject,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Grant => "GRANT",
            Self::Reject => "REJECT",
        }
    }

    pub fn inverted(self) -> Self {
        match self {
            Self::Grant => Self::Reject,
            Self::Reject => Self::Grant,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One engine's vote on one request: the outcome plus the full per-check
/// evidence, always four results in [`CheckCategory::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub request_id: RequestId,
    pub engine_id: EngineId,
    pub outcome: Outcome,
    pub check_results: Vec<CheckResult>,
}

impl Decision {
    /// All failures across the four checks, in check order.
    pub fn failures(&self) -> impl Iterator<Item = &CheckFailure> {
        self.check_results.iter().flat_map(|r| r.failures.iter())
    }

    /// Same evidence, opposite outcome — the behavior of a compromised
    /// engine, kept here so inversion is a single well-defined operation.
    pub fn with_inverted_outcome(mut self) -> Self {
        self.outcome = self.outcome.inverted();
        self
    }
}

/// Failure assembling a [`Decision`] from per-check results.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecisionError {
    #[error("no result for check {0}")]
    MissingCategory(CheckCategory),
    #[error("more than one result for check {0}")]
    DuplicateCategory(CheckCategory),
}

/// Combines exactly one result per check category into a decision:
/// REJECT if any failure is CRITICAL, GRANT otherwise. Results are reordered
/// into canonical category order.
pub fn aggregate_decision(
    request_id: RequestId,
    engine_id: EngineId,
    results: Vec<CheckResult>,
) -> Result<Decision, DecisionError> {
    let mut ordered = Vec::with_capacity(CheckCategory::ALL.len());
    for category in CheckCategory::ALL {
        let mut found = results.iter().filter(|r| r.check == category);
        let first = found.next().ok_or(DecisionError::MissingCategory(category))?;
        if found.next().is_some() {
            return Err(DecisionError::DuplicateCategory(category));
        }
        ordered.push(first.clone());
    }

    let critical = ordered
        .iter()
        .flat_map(|r| r.failures.iter())
        .any(|f| f.severity == Severity::Critical);
    let outcome = if critical { Outcome::Reject } else { Outcome::Grant };

    Ok(Decision { request_id, engine_id, outcome, check_results: ordered })
}

/// Permission to perform one kind of operation on one resource.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccessRight {
    pub kind: RequestKind,
    pub resource: String,
}

impl AccessRight {
    pub fn new(kind: RequestKind, resource: impl Into<String>) -> Self {
        Self { kind, resource: resource.into() }
    }

    /// Parses the compact `kind:resource` form used in configuration and
    /// administrative requests, e.g. `read:temperature`.
    pub fn parse(text: &str) -> Option<Self> {
        let (kind, resource) = text.split_once(':')?;
        let resource = resource.trim();
        if resource.is_empty() {
            return None;
        }
        Some(Self { kind: RequestKind::parse(kind.trim())?, resource: resource.to_owned() })
    }

    /// Parses a comma-separated list of rights; None if any entry is bad.
    pub fn parse_list(text: &str) -> Option<Vec<Self>> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Some(Vec::new());
        }
        trimmed.split(',').map(Self::parse).collect()
    }
}

impl fmt::Display for AccessRight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str().to_ascii_lowercase(), self.resource)
    }
}

/// Role of a registered actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActorRole {
    /// A human or service principal; not bound to fixed addresses.
    User,
    /// A fixed device (sensor, gateway node) with pinned IP and MAC.
    Stationary,
}

/// Directory entry for a registered actor.
///
/// STATIONARY actors carry their pinned addresses; USER actors carry none —
/// enforced by [`Actor::validate`] and the role-specific constructors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actor {
    pub actor_id: String,
    pub role: ActorRole,
    pub access_rights: Vec<AccessRight>,
    /// Shared secret the actor presents as `auth_token`.
    pub api_key: String,
    pub ip_address: Option<String>,
    pub mac_address: Option<String>,
    /// If set, the actor is refused until this time (ms since epoch).
    pub blocked_until: Option<u64>,
}

/// An actor record violating its role's address rules.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid actor `{actor_id}`: {reason}")]
pub struct InvalidActor {
    pub actor_id: String,
    pub reason: String,
}

impl Actor {
    pub fn user(actor_id: impl Into<String>, api_key: impl Into<String>, rights: Vec<AccessRight>) -> Self {
        Self {
            actor_id: actor_id.into(),
            role: ActorRole::User,
            access_rights: rights,
            api_key: api_key.into(),
            ip_address: None,
            mac_address: None,
            blocked_until: None,
        }
    }

    pub fn stationary(
        actor_id: impl Into<String>,
        api_key: impl Into<String>,
        rights: Vec<AccessRight>,
        ip_address: impl Into<String>,
        mac_address: impl Into<String>,
    ) -> Self {
        Self {
            actor_id: actor_id.into(),
            role: ActorRole::Stationary,
            access_rights: rights,
            api_key: api_key.into(),
            ip_address: Some(ip_address.into()),
            mac_address: Some(mac_address.into()),
            blocked_until: None,
        }
    }

    pub fn has_right(&self, kind: RequestKind, resource: &str) -> bool {
        self.access_rights.iter().any(|r| r.kind == kind && r.resource == resource)
    }

    /// Checks role/address consistency for records built from external input.
    pub fn validate(&self) -> Result<(), InvalidActor> {
        let fail = |reason: &str| {
            Err(InvalidActor { actor_id: self.actor_id.clone(), reason: reason.to_owned() })
        };
        match self.role {
            ActorRole::User => {
                if self.ip_address.is_some() || self.mac_address.is_some() {
                    return fail("USER actors must not pin ip or mac addresses");
                }
            }
            ActorRole::Stationary => {
                let ip_ok = self.ip_address.as_deref().is_some_and(|s| !s.is_empty());
                let mac_ok = self.mac_address.as_deref().is_some_and(|s| !s.is_empty());
                if !ip_ok || !mac_ok {
                    return fail("STATIONARY actors must pin both ip and mac addresses");
                }
            }
        }
        if self.api_key.is_empty() {
            return fail("api_key must not be empty");
        }
        Ok(())
    }
}

/// Short-lived, single-use capability returned for a granted request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessToken {
    /// Unguessable bearer secret (UUIDv4).
    pub secret: String,
    /// Lifetime in seconds; always positive.
    pub ttl_seconds: u64,
    /// Exactly the operations this token allows —
    /// for issued tokens, the single (kind, resource) that was granted.
    pub rights: Vec<AccessRight>,
    /// Milliseconds since the epoch at issuance.
    pub issued_at: u64,
}

impl AccessToken {
    pub fn issue(kind: RequestKind, resource: &str, ttl_seconds: u64, issued_at: u64) -> Self {
        assert!(ttl_seconds > 0, "token ttl must be positive");
        Self {
            secret: uuid::Uuid::new_v4().to_string(),
            ttl_seconds,
            rights: vec![AccessRight::new(kind, resource)],
            issued_at,
        }
    }

    /// A token is expired strictly after its TTL has elapsed; at exactly
    /// `issued_at + ttl` it is still valid.
    pub fn is_expired(&self, now_millis: u64) -> bool {
        now_millis.saturating_sub(self.issued_at) > self.ttl_seconds * 1000
    }

    pub fn allows(&self, kind: RequestKind, resource: &str) -> bool {
        self.rights.iter().any(|r| r.kind == kind && r.resource == resource)
    }
}

/// One decided request as recorded in the decision log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub request_id: RequestId,
    pub actor_id: String,
    pub kind: RequestKind,
    pub resource: String,
    pub outcome: Outcome,
    /// Milliseconds since the epoch when the decision was recorded.
    pub timestamp: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> RequesterContext {
        RequesterContext {
            agent: "sensor-fw/2.3".into(),
            actor: "sensor-12".into(),
            ip_address: "10.0.0.12".into(),
            mac_address: "aa:bb:cc:dd:ee:12".into(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
            auth_token: "key-12".into(),
        }
    }

    fn pass_all() -> Vec<CheckResult> {
        CheckCategory::ALL.iter().map(|&c| CheckResult::pass(c)).collect()
    }

    #[test]
    fn header_round_trips_in_canonical_field_order() {
        let original = ctx();
        let wire = original.to_header_value();

        // Fixed field order on the wire: each key's quoted form appears
        // after its predecessor's in the raw text. (Re-parsing into a JSON
        // map would sort the keys and hide the order.)
        let positions: Vec<usize> = REQUESTER_FIELDS
            .iter()
            .map(|f| wire.find(&format!("\"{f}\":")).expect("field present"))
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "wire order: {wire}");

        assert_eq!(RequesterContext::parse(&wire).unwrap(), original);
    }

    #[test]
    fn header_parse_accepts_any_key_order() {
        let wire = r#"{"auth_token":"key-12","actor":"sensor-12","agent":"sensor-fw/2.3",
            "os_version":"3.1","os_id":"sensor-os","mac_address":"aa:bb:cc:dd:ee:12",
            "ip_address":"10.0.0.12"}"#;
        assert_eq!(RequesterContext::parse(wire).unwrap(), ctx());
    }

    #[test]
    fn header_parse_rejects_missing_field() {
        let mut value: serde_json::Value = serde_json::from_str(&ctx().to_header_value()).unwrap();
        value.as_object_mut().unwrap().remove("auth_token");
        let err = RequesterContext::parse(&value.to_string()).unwrap_err();
        assert_eq!(err, HeaderError::MissingField("auth_token"));
    }

    #[test]
    fn header_parse_rejects_unknown_field() {
        let mut value: serde_json::Value = serde_json::from_str(&ctx().to_header_value()).unwrap();
        value.as_object_mut().unwrap().insert("privileges".into(), "all".into());
        let err = RequesterContext::parse(&value.to_string()).unwrap_err();
        assert_eq!(err, HeaderError::UnknownField("privileges".into()));
    }

    #[test]
    fn header_parse_rejects_non_string_field_and_non_object() {
        let mut value: serde_json::Value = serde_json::from_str(&ctx().to_header_value()).unwrap();
        value.as_object_mut().unwrap().insert("os_version".into(), serde_json::json!(3.1));
        assert!(matches!(
            RequesterContext::parse(&value.to_string()).unwrap_err(),
            HeaderError::MalformedSyntax(_)
        ));
        assert!(matches!(
            RequesterContext::parse("[1,2]").unwrap_err(),
            HeaderError::MalformedSyntax(_)
        ));
        assert!(matches!(
            RequesterContext::parse("{not json").unwrap_err(),
            HeaderError::MalformedSyntax(_)
        ));
    }

    #[test]
    fn severity_order_is_low_to_critical() {
        assert!(Severity::Low < Severity::Moderate);
        assert!(Severity::Moderate < Severity::High);
        assert!(Severity::High < Severity::Critical);
        assert_eq!(Severity::ALL.iter().copied().max(), Some(Severity::Critical));
    }

    #[test]
    fn severity_serializes_uppercase() {
        assert_eq!(serde_json::to_string(&Severity::Moderate).unwrap(), "\"MODERATE\"");
        assert_eq!(serde_json::from_str::<Severity>("\"CRITICAL\"").unwrap(), Severity::Critical);
    }

    #[test]
    fn classify_routes_plain_writes_async_and_everything_else_sync() {
        assert_eq!(classify(RequestKind::Write, "temperature"), RouteClass::Async);
        assert_eq!(classify(RequestKind::Read, "temperature"), RouteClass::Sync);
        assert_eq!(classify(RequestKind::Admin, "actors"), RouteClass::Sync);
        // Writes aimed at administrative resources never take the async lane.
        assert_eq!(classify(RequestKind::Write, "actors"), RouteClass::Sync);
    }

    #[test]
    fn aggregate_all_pass_grants() {
        let d = aggregate_decision(RequestId("r1".into()), EngineId::new("pe1"), pass_all()).unwrap();
        assert_eq!(d.outcome, Outcome::Grant);
        assert_eq!(d.check_results.len(), 4);
        assert!(d.check_results.iter().all(|r| r.passed));
    }

    #[test]
    fn aggregate_single_critical_rejects_and_keeps_evidence() {
        let mut results = pass_all();
        results[0] = CheckResult::fail(
            CheckCategory::Identity,
            vec![CheckFailure::new(failure_codes::UNKNOWN_ACTOR, Severity::Critical, "who?")],
        );
        let d = aggregate_decision(RequestId("r2".into()), EngineId::new("pe1"), results).unwrap();
        assert_eq!(d.outcome, Outcome::Reject);
        assert_eq!(d.failures().count(), 1);
        assert_eq!(d.failures().next().unwrap().code, failure_codes::UNKNOWN_ACTOR);
    }

    #[test]
    fn aggregate_subcritical_failures_grant_but_are_reported() {
        let mut results = pass_all();
        results[2] = CheckResult::fail(
            CheckCategory::Usage,
            vec![CheckFailure::new(failure_codes::IMPLAUSIBLE_VALUE, Severity::Moderate, "warm")],
        );
        let d = aggregate_decision(RequestId("r3".into()), EngineId::new("pe1"), results).unwrap();
        assert_eq!(d.outcome, Outcome::Grant);
        assert_eq!(d.failures().count(), 1);
    }

    /// Exhaustive oracle over every per-check worst severity combination:
    /// the aggregate must reject exactly when some check contains a CRITICAL
    /// failure, regardless of what the other checks report.
    #[test]
    fn aggregate_matches_exhaustive_severity_oracle() {
        // 0 = check passes, 1..=4 = worst failure severity of that check.
        for combo in 0..5u32.pow(4) {
            let mut code = combo;
            let mut results = Vec::new();
            let mut any_critical = false;
            for &category in &CheckCategory::ALL {
                let digit = code % 5;
                code /= 5;
                match digit {
                    0 => results.push(CheckResult::pass(category)),
                    d => {
                        let severity = Severity::ALL[(d - 1) as usize];
                        any_critical |= severity == Severity::Critical;
                        // Pad with a LOW failure so multi-failure checks are
                        // exercised too.
                        let mut failures =
                            vec![CheckFailure::new("padding", Severity::Low, "noise")];
                        failures.push(CheckFailure::new("worst", severity, "worst"));
                        results.push(CheckResult::fail(category, failures));
                    }
                }
            }
            let decision =
                aggregate_decision(RequestId(format!("r{combo}")), EngineId::new("pe"), results)
                    .unwrap();
            let expected = if any_critical { Outcome::Reject } else { Outcome::Grant };
            assert_eq!(decision.outcome, expected, "combo {combo}");
        }
    }

    #[test]
    fn aggregate_rejects_missing_and_duplicate_categories() {
        let mut missing = pass_all();
        missing.remove(3);
        assert_eq!(
            aggregate_decision(RequestId("r".into()), EngineId::new("pe"), missing).unwrap_err(),
            DecisionError::MissingCategory(CheckCategory::Behavior)
        );

        let mut duplicated = pass_all();
        duplicated.push(CheckResult::pass(CheckCategory::Usage));
        assert_eq!(
            aggregate_decision(RequestId("r".into()), EngineId::new("pe"), duplicated).unwrap_err(),
            DecisionError::DuplicateCategory(CheckCategory::Usage)
        );
    }

    #[test]
    fn aggregate_reorders_results_into_canonical_order() {
        let mut results = pass_all();
        results.reverse();
        let d = aggregate_decision(RequestId("r".into()), EngineId::new("pe"), results).unwrap();
        let order: Vec<CheckCategory> = d.check_results.iter().map(|r| r.check).collect();
        assert_eq!(order, CheckCategory::ALL);
    }

    #[test]
    fn decision_inversion_flips_outcome_only() {
        let d = aggregate_decision(RequestId("r".into()), EngineId::new("pe"), pass_all()).unwrap();
        let evidence = d.check_results.clone();
        let inverted = d.with_inverted_outcome();
        assert_eq!(inverted.outcome, Outcome::Reject);
        assert_eq!(inverted.check_results, evidence);
        assert_eq!(inverted.with_inverted_outcome().outcome, Outcome::Grant);
    }

    #[test]
    fn token_expiry_is_strict_past_ttl() {
        let token = AccessToken::issue(RequestKind::Read, "temperature", 60, 1_000);
        assert!(!token.is_expired(1_000));
        assert!(!token.is_expired(61_000)); // exactly at ttl: still valid
        assert!(token.is_expired(61_001));
        assert!(!token.is_expired(0)); // clock skew before issuance: not expired
    }

    #[test]
    fn token_rights_are_exactly_the_granted_pair() {
        let token = AccessToken::issue(RequestKind::Write, "temperature", 60, 0);
        assert_eq!(token.rights, vec![AccessRight::new(RequestKind::Write, "temperature")]);
        assert!(token.allows(RequestKind::Write, "temperature"));
        assert!(!token.allows(RequestKind::Read, "temperature"));
        assert!(!token.allows(RequestKind::Write, "actors"));
    }

    #[test]
    fn token_secrets_are_unique() {
        let a = AccessToken::issue(RequestKind::Read, "temperature", 60, 0);
        let b = AccessToken::issue(RequestKind::Read, "temperature", 60, 0);
        assert_ne!(a.secret, b.secret);
    }

    #[test]
    fn access_right_parses_compact_form() {
        assert_eq!(
            AccessRight::parse("read:temperature"),
            Some(AccessRight::new(RequestKind::Read, "temperature"))
        );
        assert_eq!(
            AccessRight::parse_list("read:temperature, write:temperature"),
            Some(vec![
                AccessRight::new(RequestKind::Read, "temperature"),
                AccessRight::new(RequestKind::Write, "temperature"),
            ])
        );
        assert_eq!(AccessRight::parse("fly:temperature"), None);
        assert_eq!(AccessRight::parse("read:"), None);
        assert_eq!(AccessRight::parse_list("read:temperature,nope"), None);
        assert_eq!(AccessRight::parse_list("  "), Some(vec![]));
    }

    #[test]
    fn actor_role_address_rules() {
        let user = Actor::user("u1", "k", vec![]);
        assert!(user.validate().is_ok());

        let mut bad_user = user.clone();
        bad_user.ip_address = Some("10.0.0.1".into());
        assert!(bad_user.validate().is_err());

        let device = Actor::stationary("s1", "k", vec![], "10.0.0.2", "aa:bb:cc:dd:ee:01");
        assert!(device.validate().is_ok());

        let mut bad_device = device.clone();
        bad_device.mac_address = None;
        assert!(bad_device.validate().is_err());

        let mut keyless = user;
        keyless.api_key.clear();
        assert!(keyless.validate().is_err());
    }

    #[test]
    fn payload_canonical_json_is_fixed_at_construction() {
        let request = AccessRequest {
            request_id: RequestId("r-1".into()),
            kind: RequestKind::Write,
            resource: "temperature".into(),
            parameters: BTreeMap::from([("value".to_owned(), "21.5".to_owned())]),
            requester: ctx(),
            received_at: 42,
        };
        let payload = ValidationPayload::new(request.clone());
        assert_eq!(payload.request(), &request);
        let reparsed: AccessRequest = serde_json::from_str(payload.canonical_json()).unwrap();
        assert_eq!(reparsed, request);
        // Clones share the same canonical bytes.
        let clone = payload.clone();
        assert!(std::ptr::eq(payload.canonical_json(), clone.canonical_json()));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn field() -> impl Strategy<Value = String> {
            // Printable ASCII plus some unicode, including JSON-hostile chars.
            proptest::string::string_regex("[ -~\u{e4}\u{1f600}]{0,24}").unwrap()
        }

        proptest! {
            #[test]
            fn header_round_trip(
                agent in field(), actor in field(), ip in field(), mac in field(),
                os_id in field(), os_version in field(), auth in field()
            ) {
                let original = RequesterContext {
                    agent, actor, ip_address: ip, mac_address: mac,
                    os_id, os_version, auth_token: auth,
                };
                let parsed = RequesterContext::parse(&original.to_header_value()).unwrap();
                prop_assert_eq!(parsed, original);
            }

            #[test]
            fn history_record_round_trip(
                actor in field(),
                resource in field(),
                ts in any::<u64>(),
                grant in any::<bool>(),
            ) {
                let record = HistoryRecord {
                    request_id: RequestId::random(),
                    actor_id: actor,
                    kind: RequestKind::Write,
                    resource,
                    outcome: if grant { Outcome::Grant } else { Outcome::Reject },
                    timestamp: ts,
                };
                let json = serde_json::to_string(&record).unwrap();
                prop_assert_eq!(serde_json::from_str::<HistoryRecord>(&json).unwrap(), record);
            }
        }
    }
}
