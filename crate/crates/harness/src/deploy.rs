//! Builds a complete in-process deployment of one system variant: actor
//! directory, vulnerability store, engine replicas on a shared worker pool,
//! policy administrator, decision log (replicated ledger or plain table),
//! persistence managers, and the gateway in front of it all.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;
use tokio::sync::Semaphore;

use ztbc_core::admin::{PolicyAdmin, ValidationOutcome};
use ztbc_core::broker::MessageBroker;
use ztbc_core::clock::{Clock, RuntimeClock};
use ztbc_core::config::{ConfigError, SystemConfig};
use ztbc_core::engine::{CheckLatency, EngineContext, EngineError, FaultInjection, PolicyEngine};
use ztbc_core::gateway::{Analyser, GatewayError, GatewayResponse, Pep, PepMode, RawRequest};
use ztbc_core::history::{DecisionLog, HistorySource, PlainHistoryTable};
use ztbc_core::ledger::{Ledger, LedgerError, PeerAudit};
use ztbc_core::metrics::Metrics;
use ztbc_core::model::{AccessRight, Actor, EngineId, HistoryRecord, RequestKind, Severity};
use ztbc_core::pm::{standard_managers, PersistenceManager, TemperaturePm};
use ztbc_core::validators::{
    default_rules, ActorDirectory, DirectoryReader, Vulnerability, VulnerabilityStore,
};

use crate::variant::Variant;

/// Identity of the operator account seeded into every deployment.
pub const ROOT_ADMIN: &str = "root-admin";
pub const ROOT_ADMIN_KEY: &str = "root-admin-key";

#[derive(Debug, Error)]
pub enum DeployError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("cannot seed deployment: {0}")]
    Seed(String),
}

/// Everything needed to build one deployment.
#[derive(Clone)]
pub struct DeploymentSpec {
    pub variant: Variant,
    /// Engine replica count; defaults to the variant's standard count.
    pub engine_count: Option<usize>,
    pub config: SystemConfig,
    /// Whether engines may be switched into a compromised state at runtime.
    pub fault_injection: FaultInjection,
    /// Clock override (defaults to the runtime clock, which follows virtual
    /// time under a paused runtime).
    pub clock: Option<Arc<dyn Clock>>,
}

impl DeploymentSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            engine_count: None,
            config: SystemConfig::default(),
            fault_injection: FaultInjection::Enabled,
            clock: None,
        }
    }

    /// The benchmark profile: 20ms per check, 5ms fixed admission overhead,
    /// a worker pool of 4.
    pub fn bench(variant: Variant) -> Self {
        let mut spec = Self::new(variant);
        spec.config.check_latency_ms = 20;
        spec.config.request_overhead_ms = 5;
        spec.config.engine_workers = 4;
        spec
    }

    pub fn engines(&self) -> usize {
        self.engine_count.unwrap_or_else(|| self.variant.engine_count())
    }
}

/// A fully wired in-process system. Must be built inside a tokio runtime:
/// the ledger orderer and all background work run as tasks on it.
pub struct Deployment {
    pub variant: Variant,
    pub spec: DeploymentSpec,
    pub pep: Arc<Pep>,
    pub admin: Option<Arc<PolicyAdmin>>,
    pub engines: Vec<Arc<PolicyEngine>>,
    pub ledger: Option<Ledger>,
    /// The in-memory decision log used when the ledger is absent.
    pub plain_log: Option<Arc<PlainHistoryTable>>,
    pub directory: Arc<ActorDirectory>,
    pub vulnerabilities: Arc<VulnerabilityStore>,
    pub temp_pm: Arc<TemperaturePm>,
    pub managers: BTreeMap<String, Arc<dyn PersistenceManager>>,
    pub broker: Arc<MessageBroker<ValidationOutcome>>,
    pub metrics: Arc<Metrics>,
    pub analyser: Analyser,
    pub clock: Arc<dyn Clock>,
}

impl Deployment {
    pub fn build(spec: DeploymentSpec) -> Result<Self, DeployError> {
        spec.config.check_fault_policy(spec.fault_injection)?;
        let clock: Arc<dyn Clock> =
            spec.clock.clone().unwrap_or_else(|| Arc::new(RuntimeClock::new()));

        let directory = ActorDirectory::new();
        let vulnerabilities = VulnerabilityStore::new();
        seed_directory(&directory)?;
        seed_vulnerabilities(&vulnerabilities);

        let mut managers =
            standard_managers(Arc::clone(&directory), Arc::clone(&vulnerabilities), clock.clone());
        let temp_pm = TemperaturePm::new(clock.clone());
        managers.insert(temp_pm.resource().to_string(), Arc::clone(&temp_pm) as _);

        let broker = Arc::new(MessageBroker::new());
        let metrics = Arc::new(Metrics::default());

        // Decision log and history source: the replicated ledger for the
        // BC variants (log through the first peer, read through the second),
        // otherwise one shared in-memory table.
        let mut ledger = None;
        let mut plain_log = None;
        let (log, history): (Arc<dyn DecisionLog>, Arc<dyn HistorySource>) =
            if spec.variant.uses_ledger() {
                let chain = Ledger::spawn(spec.config.ledger.clone(), clock.clone());
                let peers = chain.peer_ids();
                let logging = chain.client(&peers[0])?;
                let monitoring = chain.client(peers.get(1).unwrap_or(&peers[0]))?;
                ledger = Some(chain);
                (Arc::new(logging), Arc::new(monitoring))
            } else {
                let table = PlainHistoryTable::new();
                plain_log = Some(Arc::clone(&table));
                (table.clone(), table)
            };

        let engine_count = spec.engines();
        let workers = match spec.config.engine_workers {
            0 => None,
            n => Some(Arc::new(Semaphore::new(n))),
        };
        let ctx = EngineContext {
            directory: DirectoryReader::new(Arc::clone(&directory)),
            vulnerabilities: Arc::clone(&vulnerabilities),
            rules: Arc::new(
                spec.config
                    .rules
                    .clone()
                    .unwrap_or_else(|| default_rules(spec.config.temperature_range)),
            ),
            history: Arc::clone(&history),
            behavior: spec.config.behavior,
            clock: clock.clone(),
            workers,
        };
        let latency = CheckLatency::uniform(spec.config.check_latency_ms);
        let engines: Vec<Arc<PolicyEngine>> = (1..=engine_count)
            .map(|n| {
                let id = format!("pe{n}");
                let engine = PolicyEngine::new(
                    EngineId::new(&id),
                    ctx.clone(),
                    latency,
                    spec.fault_injection,
                );
                if spec.config.engines.iter().any(|e| e.id == id && e.compromised) {
                    engine.set_compromised(true).expect("checked by fault policy");
                }
                engine
            })
            .collect();

        let admin = if spec.variant.is_zero_trust() {
            Some(PolicyAdmin::new(
                engines.clone(),
                Arc::clone(&broker),
                managers.clone(),
                Arc::clone(&log),
                spec.config.admin_config(),
                clock.clone(),
                Arc::clone(&metrics),
            ))
        } else {
            None
        };

        let mode = match &admin {
            Some(admin) => {
                PepMode::ZeroTrust { admin: Arc::clone(admin), broker: Arc::clone(&broker) }
            }
            None => PepMode::Conventional { directory: DirectoryReader::new(Arc::clone(&directory)) },
        };
        let pep = Pep::new(
            mode,
            managers.clone(),
            spec.config.client_secret.clone(),
            spec.config.request_overhead(),
            clock.clone(),
            Arc::clone(&metrics),
        );

        let analyser = Analyser::new(
            DirectoryReader::new(Arc::clone(&directory)),
            Arc::clone(&history),
            admin.clone(),
        );

        Ok(Self {
            variant: spec.variant,
            pep,
            admin,
            engines,
            ledger,
            plain_log,
            directory,
            vulnerabilities,
            temp_pm,
            managers,
            broker,
            metrics,
            analyser,
            clock,
            spec,
        })
    }

    /// Convenience passthrough using the deployment's own client secret.
    pub async fn admit(
        &self,
        header: &str,
        raw: RawRequest,
    ) -> Result<GatewayResponse, GatewayError> {
        self.pep.admit(header, &self.spec.config.client_secret, raw).await
    }

    /// Waits until no background work remains: pending rounds, async
    /// completions, decision-log writes, and ledger replication.
    pub async fn drain(&self) {
        if let Some(admin) = &self.admin {
            admin.gauge().quiesce().await;
        }
        self.pep.gauge().quiesce().await;
        if let Some(ledger) = &self.ledger {
            ledger.gauge().quiesce().await;
        }
    }

    /// Flips one engine's compromise switch.
    pub fn inject_fault(&self, engine_id: &str, compromised: bool) -> Result<(), EngineError> {
        let engine = self
            .engines
            .iter()
            .find(|e| e.id().0 == engine_id)
            .ok_or_else(|| EngineError::UnknownEngine(engine_id.to_string()))?;
        engine.set_compromised(compromised)
    }

    /// Decision history for one actor, newest first, read from whichever
    /// log this variant keeps.
    pub fn history_for(&self, actor_id: &str, limit: usize) -> Vec<HistoryRecord> {
        if let Some(ledger) = &self.ledger {
            let peers = ledger.peer_ids();
            let monitor = peers.get(1).unwrap_or(&peers[0]);
            ledger
                .client(monitor)
                .and_then(|c| c.query_history(actor_id, limit))
                .unwrap_or_default()
        } else if let Some(table) = &self.plain_log {
            table.recent(actor_id, limit).unwrap_or_default()
        } else {
            Vec::new()
        }
    }

    /// Block height per ledger peer (empty for ledgerless variants).
    pub fn chain_heights(&self) -> BTreeMap<String, usize> {
        let Some(ledger) = &self.ledger else { return BTreeMap::new() };
        ledger
            .peer_ids()
            .into_iter()
            .map(|p| {
                let height = ledger.block_height(&p).unwrap_or(0);
                (p, height)
            })
            .collect()
    }

    /// Integrity audit of every ledger peer (empty for ledgerless variants).
    pub fn audit_ledger(&self) -> Vec<PeerAudit> {
        let Some(ledger) = &self.ledger else { return Vec::new() };
        ledger
            .peer_ids()
            .iter()
            .filter_map(|p| ledger.audit_peer(p).ok())
            .collect()
    }
}

fn seed_directory(directory: &ActorDirectory) -> Result<(), DeployError> {
    directory
        .create(Actor::user(
            ROOT_ADMIN,
            ROOT_ADMIN_KEY,
            vec![
                AccessRight::new(RequestKind::Admin, "actors"),
                AccessRight::new(RequestKind::Admin, "vulnerabilities"),
                AccessRight::new(RequestKind::Admin, "analyser"),
            ],
        ))
        .map_err(|e| DeployError::Seed(e.to_string()))
}

/// Known-vulnerable platforms. None of them match the sensor fleet's OS, so
/// healthy devices pass the environment check; devices reporting these
/// platforms accumulate failures at the listed severity.
fn seed_vulnerabilities(store: &VulnerabilityStore) {
    let entries = [
        Vulnerability::new("legacy-os", "*", Severity::High, "end-of-life, no patches"),
        Vulnerability::new("legacy-os", "4.2", Severity::Critical, "remote code execution in update client"),
        Vulnerability::new("embedded-os", "1.0-2.4", Severity::Moderate, "stack overflow in config parser"),
    ];
    for entry in entries {
        let _ = store.add(entry);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn every_variant_builds_with_its_standard_shape() {
        for variant in Variant::ALL {
            let deployment = Deployment::build(DeploymentSpec::new(variant)).unwrap();
            assert_eq!(deployment.engines.len(), variant.engine_count(), "{variant}");
            assert_eq!(deployment.ledger.is_some(), variant.uses_ledger(), "{variant}");
            assert_eq!(deployment.admin.is_some(), variant.is_zero_trust(), "{variant}");
            assert!(deployment.directory.get(ROOT_ADMIN).unwrap().is_some());
            if variant.uses_ledger() {
                // Genesis everywhere, clean audits.
                assert!(deployment.chain_heights().values().all(|&h| h == 1));
                assert!(deployment.audit_ledger().iter().all(|a| a.is_clean()));
            }
            deployment.drain().await;
        }
    }

    #[tokio::test]
    async fn engine_count_override_beats_the_variant_default() {
        let mut spec = DeploymentSpec::new(Variant::NoBc);
        spec.engine_count = Some(6);
        let deployment = Deployment::build(spec).unwrap();
        assert_eq!(deployment.engines.len(), 6);
        assert_eq!(deployment.engines[0].id().0, "pe1");
        assert_eq!(deployment.engines[5].id().0, "pe6");
    }

    #[tokio::test]
    async fn fault_injection_respects_the_deployment_policy() {
        let mut spec = DeploymentSpec::new(Variant::ZtaBc);
        spec.fault_injection = FaultInjection::Forbidden;
        let deployment = Deployment::build(spec).unwrap();
        assert!(deployment.inject_fault("pe1", true).is_err());
        assert!(deployment.inject_fault("pe9", true).is_err(), "unknown engine");

        let spec = DeploymentSpec::new(Variant::ZtaBc);
        let deployment = Deployment::build(spec).unwrap();
        deployment.inject_fault("pe1", true).unwrap();
        assert!(deployment.engines[0].is_compromised());
    }

    #[tokio::test]
    async fn preconfigured_compromise_requires_fault_injection() {
        let mut spec = DeploymentSpec::new(Variant::ZtaBc);
        spec.config.engines[1].compromised = true;
        spec.fault_injection = FaultInjection::Forbidden;
        assert!(matches!(
            Deployment::build(spec),
            Err(DeployError::Config(ConfigError::FaultInjectionInProduction(_)))
        ));

        let mut spec = DeploymentSpec::new(Variant::ZtaBc);
        spec.config.engines[1].compromised = true;
        let deployment = Deployment::build(spec).unwrap();
        assert!(deployment.engines[1].is_compromised());
        assert!(!deployment.engines[0].is_compromised());
    }
}
