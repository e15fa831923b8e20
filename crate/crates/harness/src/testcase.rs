//! The five benchmark scenarios (TC1–TC5), runnable against any deployment
//! variant. Durations are measured with the runtime's clock, so a paused
//! runtime yields deterministic virtual timings and a normal runtime yields
//! wall-clock timings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tokio::task::JoinSet;

use ztbc_core::gateway::{GatewayResponse, RawRequest};
use ztbc_core::model::{
    failure_codes, AccessRight, Actor, CheckResult, RequestKind, RequesterContext,
};

use crate::deploy::Deployment;
use crate::variant::Variant;

/// The scenario matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TestCase {
    /// Repeated forbidden requests by one actor: every attempt is rejected
    /// and the rejection streak eventually trips the behavior block.
    Tc1,
    /// A batch of sensor submissions followed by a read that must see all
    /// of them.
    Tc2,
    /// A burst of data submissions measured at the acknowledgement point —
    /// validation and application happen behind the ack.
    Tc3,
    /// A burst of strictly sequential reads, each waiting out its full
    /// validation round.
    Tc4,
    /// Several clients working concurrently with mixed reads and writes.
    Tc5,
}

impl TestCase {
    pub const ALL: [TestCase; 5] = [Self::Tc1, Self::Tc2, Self::Tc3, Self::Tc4, Self::Tc5];

    pub fn label(self) -> &'static str {
        match self {
            Self::Tc1 => "TC1",
            Self::Tc2 => "TC2",
            Self::Tc3 => "TC3",
            Self::Tc4 => "TC4",
            Self::Tc5 => "TC5",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::Tc1 => "forbidden-access streak until behavior block",
            Self::Tc2 => "write batch, then verify with a read",
            Self::Tc3 => "asynchronous write burst (ack-time measured)",
            Self::Tc4 => "sequential synchronous read burst",
            Self::Tc5 => "concurrent mixed read/write workers",
        }
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown test case `{0}` (expected TC1..TC5)")]
pub struct UnknownTestCase(String);

impl FromStr for TestCase {
    type Err = UnknownTestCase;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut normalized = s.trim().to_ascii_uppercase();
        // Accept the bare scenario number (`--tc 3`) as well as the label.
        if !normalized.starts_with("TC") {
            normalized = format!("TC{normalized}");
        }
        Self::ALL
            .into_iter()
            .find(|c| c.label() == normalized)
            .ok_or_else(|| UnknownTestCase(s.to_string()))
    }
}

/// Operation counts per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub tc1_attempts: usize,
    pub tc2_writes: usize,
    pub tc3_writes: usize,
    pub tc4_seed_writes: usize,
    pub tc4_reads: usize,
    pub tc5_workers: usize,
    pub tc5_ops_per_worker: usize,
}

impl Default for CaseCounts {
    fn default() -> Self {
        Self {
            tc1_attempts: 6,
            tc2_writes: 20,
            tc3_writes: 100,
            tc4_seed_writes: 5,
            tc4_reads: 100,
            tc5_workers: 4,
            tc5_ops_per_worker: 25,
        }
    }
}

impl CaseCounts {
    /// Scales every burst size down for quick runs (minimum 1 each;
    /// TC1 keeps its streak length — it is policy-driven, not load-driven).
    pub fn scaled(factor: f64) -> Self {
        let scale = |n: usize| ((n as f64 * factor).round() as usize).max(1);
        let defaults = Self::default();
        Self {
            tc1_attempts: defaults.tc1_attempts,
            tc2_writes: scale(defaults.tc2_writes),
            tc3_writes: scale(defaults.tc3_writes),
            tc4_seed_writes: defaults.tc4_seed_writes,
            tc4_reads: scale(defaults.tc4_reads),
            tc5_workers: defaults.tc5_workers,
            tc5_ops_per_worker: scale(defaults.tc5_ops_per_worker),
        }
    }
}

/// Normalized per-operation result. GRANTED and ACCEPTED both mean the
/// request got through the gate; the difference is only the routing class,
/// which varies across variants for the same workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Granted,
    Accepted,
    Rejected,
}

impl Verdict {
    pub fn admitted(self) -> bool {
        !matches!(self, Self::Rejected)
    }

    fn of(response: &GatewayResponse) -> Self {
        match response {
            GatewayResponse::Granted { .. } => Self::Granted,
            GatewayResponse::Accepted { .. } => Self::Accepted,
            GatewayResponse::Rejected { .. } => Self::Rejected,
        }
    }
}

/// Result of one scenario run against one deployment.
#[derive(Debug, Clone, Serialize)]
pub struct CaseOutcome {
    pub variant: Variant,
    pub case: TestCase,
    /// Measured window in milliseconds (virtual or wall, per runtime).
    pub duration_ms: f64,
    pub verdicts: Vec<Verdict>,
    /// Sensor readings present after the run fully drained.
    pub readings_stored: usize,
    /// Whether the final rejection carried a behavior block (TC1).
    pub behavior_blocked: bool,
    /// Ledger height per peer after draining (empty without a ledger).
    pub chain_heights: BTreeMap<String, usize>,
}

impl CaseOutcome {
    pub fn operations(&self) -> usize {
        self.verdicts.len()
    }

    /// The cross-variant functional signature: normalized verdict string
    /// plus the number of stored readings.
    pub fn signature(&self) -> (Vec<bool>, usize) {
        (self.verdicts.iter().map(|v| v.admitted()).collect(), self.readings_stored)
    }
}

/// One synthetic device identity, seeded into the directory and able to
/// produce its own wire headers.
pub struct Persona {
    pub actor_id: String,
    pub api_key: String,
    pub ip_address: String,
    pub mac_address: String,
}

impl Persona {
    /// Deterministic addressing per (tag, index) so repeated runs never
    /// collide with each other's directory entries or history.
    pub fn device(tag: &str, index: usize) -> Self {
        Self {
            actor_id: format!("dev-{tag}-{index}"),
            api_key: format!("key-{tag}-{index}"),
            ip_address: format!("10.31.{}.{}", (index / 250) % 250, index % 250 + 1),
            mac_address: format!("02:aa:00:00:{:02x}:{:02x}", (index / 256) % 256, index % 256),
        }
    }

    pub fn header(&self) -> String {
        RequesterContext {
            agent: "sensor-fw/2.4".into(),
            actor: self.actor_id.clone(),
            ip_address: self.ip_address.clone(),
            mac_address: self.mac_address.clone(),
            os_id: "sensor-os".into(),
            os_version: "3.1".into(),
            auth_token: self.api_key.clone(),
        }
        .to_header_value()
    }

    /// Registers this persona as a pinned stationary device with the given
    /// rights (setup step, not part of any measured window).
    pub fn seed(&self, deployment: &Deployment, rights: Vec<AccessRight>) {
        deployment
            .directory
            .create(Actor::stationary(
                &self.actor_id,
                &self.api_key,
                rights,
                &self.ip_address,
                &self.mac_address,
            ))
            .expect("persona ids are unique per run");
    }

    fn write(&self, value: f64) -> RawRequest {
        RawRequest {
            kind: RequestKind::Write,
            resource: "temperature".into(),
            parameters: [("value".to_string(), format!("{value:.2}"))].into(),
        }
    }

    fn read_own(&self) -> RawRequest {
        RawRequest {
            kind: RequestKind::Read,
            resource: "temperature".into(),
            parameters: [("actor_id".to_string(), self.actor_id.clone())].into(),
        }
    }
}

fn rw_rights() -> Vec<AccessRight> {
    vec![
        AccessRight::new(RequestKind::Write, "temperature"),
        AccessRight::new(RequestKind::Read, "temperature"),
    ]
}

fn is_behavior_blocked(report: &[CheckResult]) -> bool {
    report
        .iter()
        .flat_map(|r| &r.failures)
        .any(|f| f.code == failure_codes::TEMPORARILY_BLOCKED)
}

/// Runs one scenario. `tag` must be unique per invocation on a shared
/// deployment; with one deployment per run any constant will do.
pub async fn run_case(
    deployment: &Deployment,
    case: TestCase,
    counts: &CaseCounts,
    tag: &str,
) -> CaseOutcome {
    let (duration_ms, verdicts, behavior_blocked) = match case {
        TestCase::Tc1 => run_tc1(deployment, counts, tag).await,
        TestCase::Tc2 => run_tc2(deployment, counts, tag).await,
        TestCase::Tc3 => run_tc3(deployment, counts, tag).await,
        TestCase::Tc4 => run_tc4(deployment, counts, tag).await,
        TestCase::Tc5 => run_tc5(deployment, counts, tag).await,
    };
    deployment.drain().await;

    CaseOutcome {
        variant: deployment.variant,
        case,
        duration_ms,
        verdicts,
        readings_stored: deployment.temp_pm.all_readings().len(),
        behavior_blocked,
        chain_heights: deployment.chain_heights(),
    }
}

/// TC1: an actor without any rights hammers the same resource. Every
/// attempt must be rejected; in zero-trust variants the recorded streak
/// trips the behavior block on the final attempt. Each attempt drains the
/// pipeline so its decision is on record before the next one.
async fn run_tc1(
    deployment: &Deployment,
    counts: &CaseCounts,
    tag: &str,
) -> (f64, Vec<Verdict>, bool) {
    let intruder = Persona::device(&format!("tc1-{tag}"), 0);
    intruder.seed(deployment, Vec::new());
    let header = intruder.header();

    let started = tokio::time::Instant::now();
    let mut verdicts = Vec::with_capacity(counts.tc1_attempts);
    let mut blocked = false;
    for _ in 0..counts.tc1_attempts {
        let response = deployment.admit(&header, intruder.read_own()).await.unwrap();
        verdicts.push(Verdict::of(&response));
        blocked = match &response {
            GatewayResponse::Rejected { report, .. } => is_behavior_blocked(report),
            _ => false,
        };
        deployment.drain().await;
    }
    (elapsed_ms(started), verdicts, blocked)
}

/// TC2: a device submits a batch of readings, then reads them back; the
/// read must return every submitted value.
async fn run_tc2(
    deployment: &Deployment,
    counts: &CaseCounts,
    tag: &str,
) -> (f64, Vec<Verdict>, bool) {
    let device = Persona::device(&format!("tc2-{tag}"), 0);
    device.seed(deployment, rw_rights());
    let header = device.header();

    let started = tokio::time::Instant::now();
    let mut verdicts = Vec::with_capacity(counts.tc2_writes + 1);
    for n in 0..counts.tc2_writes {
        let response =
            deployment.admit(&header, device.write(15.0 + n as f64 * 0.25)).await.unwrap();
        verdicts.push(Verdict::of(&response));
    }
    // All submissions must be applied before the verifying read.
    deployment.drain().await;

    let response = deployment.admit(&header, device.read_own()).await.unwrap();
    let returned = match &response {
        GatewayResponse::Granted { data, .. } => data.readings().map(|r| r.len()).unwrap_or(0),
        _ => 0,
    };
    assert_eq!(
        returned,
        counts.tc2_writes,
        "verification read must see the whole batch ({})",
        deployment.variant
    );
    verdicts.push(Verdict::of(&response));
    (elapsed_ms(started), verdicts, false)
}

/// TC3: a write burst measured at the acknowledgement point. Zero-trust
/// variants route writes asynchronously, so the window covers admissions
/// only; validation and application are drained outside it.
async fn run_tc3(
    deployment: &Deployment,
    counts: &CaseCounts,
    tag: &str,
) -> (f64, Vec<Verdict>, bool) {
    let device = Persona::device(&format!("tc3-{tag}"), 0);
    device.seed(deployment, rw_rights());
    let header = device.header();

    let started = tokio::time::Instant::now();
    let mut verdicts = Vec::with_capacity(counts.tc3_writes);
    for n in 0..counts.tc3_writes {
        let response =
            deployment.admit(&header, device.write(-20.0 + n as f64 * 0.5)).await.unwrap();
        verdicts.push(Verdict::of(&response));
    }
    (elapsed_ms(started), verdicts, false)
}

/// TC4: strictly sequential reads, each blocking on its full validation
/// round. Data to read is seeded (and drained) before the window opens.
async fn run_tc4(
    deployment: &Deployment,
    counts: &CaseCounts,
    tag: &str,
) -> (f64, Vec<Verdict>, bool) {
    let device = Persona::device(&format!("tc4-{tag}"), 0);
    device.seed(deployment, rw_rights());
    let header = device.header();

    for n in 0..counts.tc4_seed_writes {
        deployment.admit(&header, device.write(5.0 + n as f64)).await.unwrap();
    }
    deployment.drain().await;

    let started = tokio::time::Instant::now();
    let mut verdicts = Vec::with_capacity(counts.tc4_reads);
    for _ in 0..counts.tc4_reads {
        let response = deployment.admit(&header, device.read_own()).await.unwrap();
        verdicts.push(Verdict::of(&response));
    }
    (elapsed_ms(started), verdicts, false)
}

/// TC5: several devices work concurrently, alternating writes and reads.
/// The window closes when every worker has finished its script.
async fn run_tc5(
    deployment: &Deployment,
    counts: &CaseCounts,
    tag: &str,
) -> (f64, Vec<Verdict>, bool) {
    let personas: Vec<Persona> = (0..counts.tc5_workers)
        .map(|w| {
            let persona = Persona::device(&format!("tc5-{tag}"), w);
            persona.seed(deployment, rw_rights());
            persona
        })
        .collect();

    let started = tokio::time::Instant::now();
    let mut workers = JoinSet::new();
    for (index, persona) in personas.into_iter().enumerate() {
        let pep = deployment.pep.clone();
        let secret = deployment.spec.config.client_secret.clone();
        let ops = counts.tc5_ops_per_worker;
        workers.spawn(async move {
            let header = persona.header();
            let mut verdicts = Vec::with_capacity(ops);
            for op in 0..ops {
                let raw = if op % 2 == 0 {
                    persona.write(30.0 + (index * ops + op) as f64 * 0.1)
                } else {
                    persona.read_own()
                };
                let response = pep.admit(&header, &secret, raw).await.unwrap();
                verdicts.push(Verdict::of(&response));
            }
            (index, verdicts)
        });
    }

    let mut per_worker: Vec<(usize, Vec<Verdict>)> = Vec::with_capacity(counts.tc5_workers);
    while let Some(result) = workers.join_next().await {
        per_worker.push(result.expect("worker panicked"));
    }
    let duration = elapsed_ms(started);

    // Deterministic order regardless of completion interleaving.
    per_worker.sort_by_key(|(index, _)| *index);
    let verdicts = per_worker.into_iter().flat_map(|(_, v)| v).collect();
    (duration, verdicts, false)
}

fn elapsed_ms(started: tokio::time::Instant) -> f64 {
    started.elapsed().as_secs_f64() * 1000.0
}
