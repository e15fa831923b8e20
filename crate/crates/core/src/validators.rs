//! The four trust-algorithm checks and the stores they consult.
//!
//! Every policy engine runs the same fixed sequence over a validation
//! payload: IDENTITY (who is asking), ENVIRONMENT (what they run), USAGE
//! (what they ask) and BEHAVIOR (how they recently behaved). Checks collect
//! *all* applicable failures instead of short-circuiting, so a rejected
//! requester learns everything that was wrong. Store outages surface as
//! [`InfraError`] and are mapped to fail-closed critical failures by the
//! engine.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{HistorySource, HistoryUnavailable};
use crate::model::{
    failure_codes, AccessRequest, Actor, CheckCategory, CheckFailure, CheckResult, Outcome,
    RequestKind, RequesterContext, Severity,
};

/// A backing store cannot be reached (fault injection or outage).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("store unavailable: {0}")]
pub struct StoreUnavailable(pub String);

/// Infrastructure failure inside a check; the engine converts this into a
/// critical `infrastructure_unavailable` check failure (fail closed).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InfraError {
    #[error(transparent)]
    Store(#[from] StoreUnavailable),
    #[error(transparent)]
    History(#[from] HistoryUnavailable),
}

// ---------------------------------------------------------------------------
// Actor directory
// ---------------------------------------------------------------------------

/// Mutation errors of the actor directory.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectoryError {
    #[error("actor `{0}` already exists")]
    DuplicateActor(String),
    #[error("actor `{0}` not found")]
    UnknownActor(String),
    #[error(transparent)]
    Unavailable(#[from] StoreUnavailable),
}

/// Registry of known actors. Full mutation access belongs to the
/// authentication persistence manager; validation code sees only the
/// [`DirectoryReader`] facade.
#[derive(Debug, Default)]
pub struct ActorDirectory {
    actors: Mutex<BTreeMap<String, Actor>>,
    available: AtomicBool,
}

impl ActorDirectory {
    pub fn new() -> Arc<Self> {
        Arc::new(Self { actors: Mutex::new(BTreeMap::new()), available: AtomicBool::new(true) })
    }

    fn ensure_available(&self) -> Result<(), StoreUnavailable> {
        if self.available.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(StoreUnavailable("actor directory offline".into()))
        }
    }

    /// Fault-injection hook: an offline directory errors on every operation.
    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    pub fn get(&self, actor_id: &str) -> Result<Option<Actor>, StoreUnavailable> {
        self.ensure_available()?;
        Ok(self.actors.lock().unwrap().get(actor_id).cloned())
    }

    pub fn create(&self, actor: Actor) -> Result<(), DirectoryError> {
        self.ensure_available()?;
        let mut actors = self.actors.lock().unwrap();
        if actors.contains_key(&actor.actor_id) {
            return Err(DirectoryError::DuplicateActor(actor.actor_id));
        }
        actors.insert(actor.actor_id.clone(), actor);
        Ok(())
    }

    /// Replaces an existing actor record wholesale.
    pub fn update(&self, actor: Actor) -> Result<(), DirectoryError> {
        self.ensure_available()?;
        let mut actors = self.actors.lock().unwrap();
        if !actors.contains_key(&actor.actor_id) {
            return Err(DirectoryError::UnknownActor(actor.actor_id));
        }
        actors.insert(actor.actor_id.clone(), actor);
        Ok(())
    }

    pub fn delete(&self, actor_id: &str) -> Result<(), DirectoryError> {
        self.ensure_available()?;
        let mut actors = self.actors.lock().unwrap();
        if actors.remove(actor_id).is_none() {
            return Err(DirectoryError::UnknownActor(actor_id.to_owned()));
        }
        Ok(())
    }

    pub fn actor_ids(&self) -> Vec<String> {
        self.actors.lock().unwrap().keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.actors.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extends an actor's block. Monotone: never shortens an existing block,
    /// silently no-ops for unknown actors (nothing to block).
    fn apply_block(&self, actor_id: &str, until_millis: u64) -> Result<(), StoreUnavailable> {
        self.ensure_available()?;
        let mut actors = self.actors.lock().unwrap();
        if let Some(actor) = actors.get_mut(actor_id) {
            if actor.blocked_until.is_none_or(|current| until_millis > current) {
                actor.blocked_until = Some(until_millis);
            }
        }
        Ok(())
    }
}

/// Read-only view of the directory handed to validation code. The single
/// mutation it allows — extending a behavioral block — is deliberately
/// narrow; account management stays with the authentication manager.
#[derive(Debug, Clone)]
pub struct DirectoryReader {
    directory: Arc<ActorDirectory>,
}

impl DirectoryReader {
    pub fn new(directory: Arc<ActorDirectory>) -> Self {
        Self { directory }
    }

    pub fn get(&self, actor_id: &str) -> Result<Option<Actor>, StoreUnavailable> {
        self.directory.get(actor_id)
    }

    pub fn apply_block(&self, actor_id: &str, until_millis: u64) -> Result<(), StoreUnavailable> {
        self.directory.apply_block(actor_id, until_millis)
    }
}

// ---------------------------------------------------------------------------
// Vulnerability store
// ---------------------------------------------------------------------------

/// Dotted numeric version, e.g. `3.1` or `10.0.19045`. Comparison pads the
/// shorter side with zeros, so `1.2` == `1.2.0`.
#[derive(Debug, Clone, Eq)]
pub struct Version(Vec<u64>);

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Version {
    pub fn parse(text: &str) -> Option<Self> {
        let parts: Result<Vec<u64>, _> =
            text.split('.').map(|p| p.parse::<u64>()).collect();
        match parts {
            Ok(v) if !v.is_empty() => Some(Self(v)),
            _ => None,
        }
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let len = self.0.len().max(other.0.len());
        for i in 0..len {
            let a = self.0.get(i).copied().unwrap_or(0);
            let b = other.0.get(i).copied().unwrap_or(0);
            match a.cmp(&b) {
                std::cmp::Ordering::Equal => continue,
                unequal => return unequal,
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl std::fmt::Display for Version {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u64::to_string).collect();
        f.write_str(&parts.join("."))
    }
}

/// Which OS versions a vulnerability affects. Wire form is a compact string:
/// `*` (all), `1.0-2.4` (inclusive numeric range), anything else is an exact
/// version string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum VersionSpec {
    Any,
    Exact(String),
    Range { min: Version, max: Version },
}

impl VersionSpec {
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        if text.is_empty() {
            return None;
        }
        if text == "*" {
            return Some(Self::Any);
        }
        if let Some((lo, hi)) = text.split_once('-') {
            if let (Some(min), Some(max)) = (Version::parse(lo.trim()), Version::parse(hi.trim()))
            {
                if min <= max {
                    return Some(Self::Range { min, max });
                }
                return None;
            }
        }
        Some(Self::Exact(text.to_owned()))
    }

    pub fn matches(&self, version: &str) -> bool {
        match self {
            Self::Any => true,
            Self::Exact(expected) => expected == version,
            Self::Range { min, max } => match Version::parse(version) {
                Some(v) => *min <= v && v <= *max,
                None => false,
            },
        }
    }
}

impl From<VersionSpec> for String {
    fn from(spec: VersionSpec) -> String {
        match spec {
            VersionSpec::Any => "*".to_owned(),
            VersionSpec::Exact(v) => v,
            VersionSpec::Range { min, max } => format!("{min}-{max}"),
        }
    }
}

impl TryFrom<String> for VersionSpec {
    type Error = String;

    fn try_from(text: String) -> Result<Self, Self::Error> {
        Self::parse(&text).ok_or_else(|| format!("invalid version spec `{text}`"))
    }
}

/// A known-bad operating system configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vulnerability {
    pub os_id: String,
    pub affected_versions: VersionSpec,
    pub severity: Severity,
    pub description: String,
}

impl Vulnerability {
    /// Convenience constructor; panics on an unparseable version spec, so
    /// only suitable for literals (seeds, tests).
    pub fn new(
        os_id: impl Into<String>,
        affected_versions: &str,
        severity: Severity,
        description: impl Into<String>,
    ) -> Self {
        Self {
            os_id: os_id.into(),
            affected_versions: VersionSpec::parse(affected_versions)
                .unwrap_or_else(|| panic!("invalid version spec `{affected_versions}`")),
            severity,
            description: description.into(),
        }
    }
}

/// Result of inserting a vulnerability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Inserted,
    AlreadyKnown,
}

/// Registry of known OS vulnerabilities consulted by the environment check.
#[derive(Debug, Default)]
pub struct VulnerabilityStore {
    entries: Mutex<Vec<Vulnerability>>,
    available: AtomicBool,
}

impl VulnerabilityStore {
    pub fn new() -> Arc<Self> {
        Arc::new(Self { entries: Mutex::new(Vec::new()), available: AtomicBool::new(true) })
    }

    fn ensure_available(&self) -> Result<(), StoreUnavailable> {
        if self.available.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(StoreUnavailable("vulnerability store offline".into()))
        }
    }

    pub fn set_available(&self, available: bool) {
        self.available.store(available, Ordering::SeqCst);
    }

    /// Inserts unless an identical entry is already present.
    pub fn add(&self, vulnerability: Vulnerability) -> Result<AddOutcome, StoreUnavailable> {
        self.ensure_available()?;
        let mut entries = self.entries.lock().unwrap();
        if entries.contains(&vulnerability) {
            return Ok(AddOutcome::AlreadyKnown);
        }
        entries.push(vulnerability);
        Ok(AddOutcome::Inserted)
    }

    /// All entries affecting the given OS id and version.
    pub fn matching(
        &self,
        os_id: &str,
        os_version: &str,
    ) -> Result<Vec<Vulnerability>, StoreUnavailable> {
        self.ensure_available()?;
        let entries = self.entries.lock().unwrap();
        Ok(entries
            .iter()
            .filter(|v| v.os_id == os_id && v.affected_versions.matches(os_version))
            .cloned()
            .collect())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// ---------------------------------------------------------------------------
// Parameter rules
// ---------------------------------------------------------------------------

/// Validation kind for one request parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamKind {
    /// Finite decimal number within an inclusive plausibility range.
    Decimal { min: f64, max: f64 },
    /// Integer within an inclusive range.
    Integer { min: i64, max: i64 },
    /// Dotted-quad IPv4 address.
    Ipv4,
    /// Colon-separated 48-bit MAC address.
    Mac,
    /// One of a fixed set of values.
    OneOf { values: Vec<String> },
    /// Free text with a minimum length (default 1: non-empty).
    Text {
        #[serde(default = "default_min_len")]
        min_len: usize,
    },
    /// Comma-separated `kind:resource` access rights.
    RightsList,
    /// A [`VersionSpec`] pattern.
    VersionPattern,
    /// A severity name (`LOW`..`CRITICAL`).
    SeverityName,
}

fn default_min_len() -> usize {
    1
}

/// Rule for one named parameter of one operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRule {
    #[serde(default)]
    pub required: bool,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamRule {
    pub fn required(kind: ParamKind) -> Self {
        Self { required: true, kind }
    }

    pub fn optional(kind: ParamKind) -> Self {
        Self { required: false, kind }
    }
}

/// Parameter rules for one resource, split by request kind. A missing kind
/// means that operation is not defined for the resource and cannot be
/// validated.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceRules {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub read: Option<BTreeMap<String, ParamRule>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write: Option<BTreeMap<String, ParamRule>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admin: Option<BTreeMap<String, ParamRule>>,
}

impl ResourceRules {
    fn for_kind(&self, kind: RequestKind) -> Option<&BTreeMap<String, ParamRule>> {
        match kind {
            RequestKind::Read => self.read.as_ref(),
            RequestKind::Write => self.write.as_ref(),
            RequestKind::Admin => self.admin.as_ref(),
        }
    }
}

/// All usage-check rules, keyed by resource name. Declarative and
/// config-loadable; requests for resources without rules are unvalidatable
/// and rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterRules {
    pub resources: BTreeMap<String, ResourceRules>,
}

impl ParameterRules {
    pub fn lookup(&self, resource: &str, kind: RequestKind) -> Option<&BTreeMap<String, ParamRule>> {
        self.resources.get(resource).and_then(|r| r.for_kind(kind))
    }
}

/// The built-in rule set: sensor readings plus the administrative resources.
/// `temperature_range` bounds plausible sensor values in degrees Celsius.
pub fn default_rules(temperature_range: (f64, f64)) -> ParameterRules {
    let (temp_min, temp_max) = temperature_range;
    let text = || ParamKind::Text { min_len: 1 };

    let mut resources = BTreeMap::new();

    resources.insert(
        "temperature".to_owned(),
        ResourceRules {
            read: Some(BTreeMap::from([
                ("actor_id".to_owned(), ParamRule::required(text())),
                (
                    "limit".to_owned(),
                    ParamRule::optional(ParamKind::Integer { min: 1, max: 1_000_000 }),
                ),
            ])),
            write: Some(BTreeMap::from([(
                "value".to_owned(),
                ParamRule::required(ParamKind::Decimal { min: temp_min, max: temp_max }),
            )])),
            admin: None,
        },
    );

    resources.insert(
        "actors".to_owned(),
        ResourceRules {
            read: None,
            write: None,
            admin: Some(BTreeMap::from([
                (
                    "op".to_owned(),
                    ParamRule::required(ParamKind::OneOf {
                        values: vec!["create".into(), "update".into(), "delete".into()],
                    }),
                ),
                ("actor_id".to_owned(), ParamRule::required(text())),
                (
                    "role".to_owned(),
                    ParamRule::optional(ParamKind::OneOf {
                        values: vec!["user".into(), "stationary".into()],
                    }),
                ),
                ("api_key".to_owned(), ParamRule::optional(text())),
                ("rights".to_owned(), ParamRule::optional(ParamKind::RightsList)),
                ("ip_address".to_owned(), ParamRule::optional(ParamKind::Ipv4)),
                ("mac_address".to_owned(), ParamRule::optional(ParamKind::Mac)),
            ])),
        },
    );

    resources.insert(
        "vulnerabilities".to_owned(),
        ResourceRules {
            read: None,
            write: None,
            admin: Some(BTreeMap::from([
                (
                    "op".to_owned(),
                    ParamRule::required(ParamKind::OneOf { values: vec!["add".into()] }),
                ),
                ("os_id".to_owned(), ParamRule::required(text())),
                ("affected_versions".to_owned(), ParamRule::required(ParamKind::VersionPattern)),
                ("severity".to_owned(), ParamRule::required(ParamKind::SeverityName)),
                ("description".to_owned(), ParamRule::optional(ParamKind::Text { min_len: 0 })),
            ])),
        },
    );

    ParameterRules { resources }
}

// ---------------------------------------------------------------------------
// Behavior policy
// ---------------------------------------------------------------------------

/// When repeated rejections turn into a temporary block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    /// How many recent decisions the check inspects.
    #[serde(default = "default_window")]
    pub window: usize,
    /// How many consecutive same-resource rejections trigger a block.
    #[serde(default = "default_trigger")]
    pub trigger: usize,
    /// Block duration in seconds.
    #[serde(default = "default_block_seconds")]
    pub block_seconds: u64,
}

fn default_window() -> usize {
    5
}

fn default_trigger() -> usize {
    5
}

fn default_block_seconds() -> u64 {
    300
}

impl Default for BehaviorPolicy {
    fn default() -> Self {
        Self {
            window: default_window(),
            trigger: default_trigger(),
            block_seconds: default_block_seconds(),
        }
    }
}

// ---------------------------------------------------------------------------
// The four checks
// ---------------------------------------------------------------------------

/// IDENTITY: the requester must be a registered actor presenting the right
/// credential, hold the requested access right, and — for stationary actors —
/// call from its pinned addresses. All violations are CRITICAL and collected
/// together.
pub fn check_identity(
    ctx: &RequesterContext,
    kind: RequestKind,
    resource: &str,
    directory: &DirectoryReader,
) -> Result<CheckResult, InfraError> {
    let mut failures = Vec::new();

    match directory.get(&ctx.actor)? {
        None => failures.push(CheckFailure::new(
            failure_codes::UNKNOWN_ACTOR,
            Severity::Critical,
            format!("actor `{}` is not registered", ctx.actor),
        )),
        Some(actor) => {
            if actor.api_key != ctx.auth_token {
                failures.push(CheckFailure::new(
                    failure_codes::AUTH_TOKEN_MISMATCH,
                    Severity::Critical,
                    "presented auth token does not match the registered key",
                ));
            }
            if !actor.has_right(kind, resource) {
                failures.push(CheckFailure::new(
                    failure_codes::INSUFFICIENT_RIGHTS,
                    Severity::Critical,
                    format!("actor `{}` lacks the right {kind}:{resource}", ctx.actor),
                ));
            }
            if let Some(pinned) = &actor.ip_address {
                if *pinned != ctx.ip_address {
                    failures.push(CheckFailure::new(
                        failure_codes::IP_MISMATCH,
                        Severity::Critical,
                        format!("request came from {}, pinned to {pinned}", ctx.ip_address),
                    ));
                }
            }
            if let Some(pinned) = &actor.mac_address {
                if *pinned != ctx.mac_address {
                    failures.push(CheckFailure::new(
                        failure_codes::MAC_MISMATCH,
                        Severity::Critical,
                        format!("request came from {}, pinned to {pinned}", ctx.mac_address),
                    ));
                }
            }
        }
    }

    Ok(CheckResult::from_failures(CheckCategory::Identity, failures))
}

/// ENVIRONMENT: the requester's reported OS and version must not match any
/// known vulnerability. Each match fails with that vulnerability's own
/// severity, so only critical vulnerabilities force rejection.
pub fn check_environment(
    ctx: &RequesterContext,
    store: &VulnerabilityStore,
) -> Result<CheckResult, InfraError> {
    let failures = store
        .matching(&ctx.os_id, &ctx.os_version)?
        .into_iter()
        .map(|v| {
            CheckFailure::new(
                failure_codes::OS_VULNERABILITY,
                v.severity,
                format!("{} {}: {}", ctx.os_id, ctx.os_version, v.description),
            )
        })
        .collect();
    Ok(CheckResult::from_failures(CheckCategory::Environment, failures))
}

/// USAGE: the request must target a known resource/operation and every
/// parameter must be syntactically valid and semantically plausible.
/// Unknown resources and malformed or implausible values are CRITICAL;
/// stray extra parameters are HIGH (reported, not fatal — managers ignore
/// them).
pub fn check_usage(request: &AccessRequest, rules: &ParameterRules) -> CheckResult {
    let Some(ruleset) = rules.lookup(&request.resource, request.kind) else {
        return CheckResult::fail(
            CheckCategory::Usage,
            vec![CheckFailure::new(
                failure_codes::UNVALIDATABLE_REQUEST,
                Severity::Critical,
                format!(
                    "no validation rules for {} on resource `{}`",
                    request.kind, request.resource
                ),
            )],
        );
    };

    let mut failures = Vec::new();

    for (name, rule) in ruleset {
        match request.parameter(name) {
            None if rule.required => failures.push(CheckFailure::new(
                failure_codes::MISSING_PARAMETER,
                Severity::Critical,
                format!("required parameter `{name}` is missing"),
            )),
            None => {}
            Some(value) => validate_param(name, value, &rule.kind, &mut failures),
        }
    }

    for name in request.parameters.keys() {
        if !ruleset.contains_key(name) {
            failures.push(CheckFailure::new(
                failure_codes::UNEXPECTED_PARAMETER,
                Severity::High,
                format!("parameter `{name}` is not defined for this operation"),
            ));
        }
    }

    CheckResult::from_failures(CheckCategory::Usage, failures)
}

fn validate_param(name: &str, value: &str, kind: &ParamKind, failures: &mut Vec<CheckFailure>) {
    let malformed = |expected: &str| {
        CheckFailure::new(
            failure_codes::MALFORMED_PARAMETER,
            Severity::Critical,
            format!("parameter `{name}`=`{value}` is not {expected}"),
        )
    };

    match kind {
        ParamKind::Decimal { min, max } => match value.parse::<f64>() {
            Ok(number) if number.is_finite() => {
                if number < *min || number > *max {
                    failures.push(CheckFailure::new(
                        failure_codes::IMPLAUSIBLE_VALUE,
                        Severity::Critical,
                        format!("parameter `{name}`={number} outside plausible range [{min}, {max}]"),
                    ));
                }
            }
            _ => failures.push(malformed("a finite decimal number")),
        },
        ParamKind::Integer { min, max } => match value.parse::<i64>() {
            Ok(number) => {
                if number < *min || number > *max {
                    failures.push(CheckFailure::new(
                        failure_codes::IMPLAUSIBLE_VALUE,
                        Severity::Critical,
                        format!("parameter `{name}`={number} outside range [{min}, {max}]"),
                    ));
                }
            }
            _ => failures.push(malformed("an integer")),
        },
        ParamKind::Ipv4 => {
            if value.parse::<Ipv4Addr>().is_err() {
                failures.push(malformed("an IPv4 address"));
            }
        }
        ParamKind::Mac => {
            if !is_valid_mac(value) {
                failures.push(malformed("a MAC address (aa:bb:cc:dd:ee:ff)"));
            }
        }
        ParamKind::OneOf { values } => {
            if !values.iter().any(|v| v == value) {
                failures.push(malformed(&format!("one of {values:?}")));
            }
        }
        ParamKind::Text { min_len } => {
            if value.len() < *min_len {
                failures.push(malformed(&format!("text of at least {min_len} characters")));
            }
        }
        ParamKind::RightsList => {
            if crate::model::AccessRight::parse_list(value).is_none() {
                failures.push(malformed("a comma-separated list of kind:resource rights"));
            }
        }
        ParamKind::VersionPattern => {
            if VersionSpec::parse(value).is_none() {
                failures.push(malformed("a version pattern (`*`, exact, or `min-max`)"));
            }
        }
        ParamKind::SeverityName => {
            if Severity::parse(value).is_none() {
                failures.push(malformed("a severity name (LOW..CRITICAL)"));
            }
        }
    }
}

fn is_valid_mac(value: &str) -> bool {
    let groups: Vec<&str> = value.split(':').collect();
    groups.len() == 6
        && groups
            .iter()
            .all(|g| g.len() == 2 && g.chars().all(|c| c.is_ascii_hexdigit()))
}

/// BEHAVIOR: a currently blocked actor is refused outright; otherwise, if
/// the actor's most recent decisions form an unbroken run of
/// [`BehaviorPolicy::trigger`] same-resource rejections since the last block
/// ended, a new temporary block is applied and the check fails.
///
/// Only records newer than the previous block are counted toward a fresh
/// run — otherwise the rejections that caused a block would immediately
/// re-trigger it after expiry and the actor would never recover.
pub fn check_behavior(
    ctx: &RequesterContext,
    policy: &BehaviorPolicy,
    directory: &DirectoryReader,
    history: &dyn HistorySource,
    now_millis: u64,
) -> Result<CheckResult, InfraError> {
    let actor = directory.get(&ctx.actor)?;

    if let Some(until) = actor.as_ref().and_then(|a| a.blocked_until) {
        if until > now_millis {
            return Ok(CheckResult::fail(
                CheckCategory::Behavior,
                vec![CheckFailure::new(
                    failure_codes::TEMPORARILY_BLOCKED,
                    Severity::Critical,
                    format!("actor `{}` temporarily blocked until {until}", ctx.actor),
                )],
            ));
        }
    }

    let recent = history.recent(&ctx.actor, policy.window)?;
    let last_block_end = actor.as_ref().and_then(|a| a.blocked_until).unwrap_or(0);
    let fresh: Vec<_> =
        recent.iter().take_while(|r| r.timestamp >= last_block_end).collect();

    let triggered = policy.trigger > 0
        && fresh.len() >= policy.trigger
        && fresh[..policy.trigger].iter().all(|r| {
            r.outcome == Outcome::Reject && r.resource == fresh[0].resource
        });

    if triggered {
        let until = now_millis + policy.block_seconds * 1000;
        directory.apply_block(&ctx.actor, until)?;
        return Ok(CheckResult::fail(
            CheckCategory::Behavior,
            vec![CheckFailure::new(
                failure_codes::TEMPORARILY_BLOCKED,
                Severity::Critical,
                format!(
                    "actor `{}` temporarily blocked until {until}: {} consecutive rejected \
                     requests for `{}`",
                    ctx.actor, policy.trigger, fresh[0].resource
                ),
            )],
        ));
    }

    Ok(CheckResult::pass(CheckCategory::Behavior))
}
