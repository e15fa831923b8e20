//! Deployment configuration, loadable from TOML.
//!
//! One file describes a whole deployment: gateway knobs, engine replicas,
//! check latencies, behavior policy, ledger layout. Everything has a
//! default, so an empty document is a valid three-engine deployment.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admin::AdminConfig;
use crate::engine::FaultInjection;
use crate::ledger::LedgerConfig;
use crate::validators::{BehaviorPolicy, ParameterRules};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("engine `{0}` is configured compromised, but fault injection is disabled here")]
    FaultInjectionInProduction(String),
    #[error("duplicate engine id `{0}`")]
    DuplicateEngineId(String),
    #[error("invalid configuration: {0}")]
    Invalid(&'static str),
}

/// One policy-engine replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub id: String,
    /// Start the replica with inverted verdicts. Only honored by
    /// deployments that allow fault injection (benchmarks, tests).
    #[serde(default)]
    pub compromised: bool,
}

fn default_engines() -> Vec<EngineConfig> {
    ["pe1", "pe2", "pe3"]
        .into_iter()
        .map(|id| EngineConfig { id: id.to_string(), compromised: false })
        .collect()
}

fn default_client_secret() -> String {
    "edge-client-secret".to_string()
}

fn default_token_ttl() -> u64 {
    60
}

fn default_engine_timeout_ms() -> u64 {
    10_000
}

fn default_engine_workers() -> usize {
    4
}

fn default_log_attempts() -> u32 {
    3
}

fn default_log_backoff_ms() -> u64 {
    50
}

fn default_temperature_range() -> (f64, f64) {
    (-90.0, 60.0)
}

/// Full deployment description. See module docs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Shared secret every client presents at the gateway.
    pub client_secret: String,
    /// Lifetime of issued access tokens.
    pub token_ttl_seconds: u64,
    /// Per-engine vote deadline.
    pub engine_timeout_ms: u64,
    /// Fixed admission cost paid by every request at the gateway.
    pub request_overhead_ms: u64,
    /// Size of the shared evaluation pool across engine replicas
    /// (0 = unbounded).
    pub engine_workers: usize,
    /// Simulated evaluation latency of each of the four checks.
    pub check_latency_ms: u64,
    /// Decision-log write attempts before a record is dropped.
    pub log_attempts: u32,
    /// Base backoff between log attempts (doubles each retry).
    pub log_backoff_ms: u64,
    /// Plausible bounds for submitted temperature values.
    pub temperature_range: (f64, f64),
    pub behavior: BehaviorPolicy,
    pub ledger: LedgerConfig,
    #[serde(rename = "engine")]
    pub engines: Vec<EngineConfig>,
    /// Optional override of the per-resource parameter rules; when absent,
    /// the built-in rules derived from `temperature_range` apply.
    pub rules: Option<ParameterRules>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            client_secret: default_client_secret(),
            token_ttl_seconds: default_token_ttl(),
            engine_timeout_ms: default_engine_timeout_ms(),
            request_overhead_ms: 0,
            engine_workers: default_engine_workers(),
            check_latency_ms: 0,
            log_attempts: default_log_attempts(),
            log_backoff_ms: default_log_backoff_ms(),
            temperature_range: default_temperature_range(),
            behavior: BehaviorPolicy::default(),
            ledger: LedgerConfig::default(),
            engines: default_engines(),
            rules: None,
        }
    }
}

impl SystemConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.check_consistency()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    fn check_consistency(&self) -> Result<(), ConfigError> {
        if self.token_ttl_seconds == 0 {
            return Err(ConfigError::Invalid("token_ttl_seconds must be positive"));
        }
        if self.engine_timeout_ms == 0 {
            return Err(ConfigError::Invalid("engine_timeout_ms must be positive"));
        }
        if self.temperature_range.0 >= self.temperature_range.1 {
            return Err(ConfigError::Invalid("temperature_range must be (low, high)"));
        }
        if self.ledger.peers.is_empty() {
            return Err(ConfigError::Invalid("ledger needs at least one peer"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for engine in &self.engines {
            if !seen.insert(engine.id.as_str()) {
                return Err(ConfigError::DuplicateEngineId(engine.id.clone()));
            }
        }
        Ok(())
    }

    /// Rejects configurations that pre-compromise engines unless this
    /// deployment explicitly allows fault injection.
    pub fn check_fault_policy(&self, policy: FaultInjection) -> Result<(), ConfigError> {
        if policy == FaultInjection::Forbidden {
            if let Some(engine) = self.engines.iter().find(|e| e.compromised) {
                return Err(ConfigError::FaultInjectionInProduction(engine.id.clone()));
            }
        }
        Ok(())
    }

    pub fn admin_config(&self) -> AdminConfig {
        AdminConfig {
            token_ttl_seconds: self.token_ttl_seconds,
            engine_timeout: Duration::from_millis(self.engine_timeout_ms),
            log_attempts: self.log_attempts,
            log_backoff: Duration::from_millis(self.log_backoff_ms),
        }
    }

    pub fn request_overhead(&self) -> Duration {
        Duration::from_millis(self.request_overhead_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_a_valid_three_engine_deployment() {
        let config = SystemConfig::from_toml("").unwrap();
        assert_eq!(config.engines.len(), 3);
        assert_eq!(config.token_ttl_seconds, 60);
        assert_eq!(config.engine_workers, 4);
        assert_eq!(config.ledger.peers.len(), 3);
        assert!(config.rules.is_none());
        assert!(!config.engines.iter().any(|e| e.compromised));
    }

    #[test]
    fn full_document_round_trips() {
        let text = r#"
            client_secret = "s3cret"
            token_ttl_seconds = 30
            engine_timeout_ms = 2000
            request_overhead_ms = 5
            engine_workers = 8
            check_latency_ms = 20
            temperature_range = [-40.0, 85.0]

            [behavior]
            window = 8
            trigger = 4
            block_seconds = 120

            [ledger]
            peers = ["p1", "p2"]
            block_batch_size = 4

            [[engine]]
            id = "alpha"

            [[engine]]
            id = "beta"
            compromised = true
        "#;
        let config = SystemConfig::from_toml(text).unwrap();
        assert_eq!(config.client_secret, "s3cret");
        assert_eq!(config.behavior.trigger, 4);
        assert_eq!(config.ledger.block_batch_size, 4);
        assert_eq!(config.engines.len(), 2);
        assert!(config.engines[1].compromised);
        assert_eq!(config.temperature_range, (-40.0, 85.0));

        let emitted = toml::to_string(&config).unwrap();
        let reparsed = SystemConfig::from_toml(&emitted).unwrap();
        assert_eq!(reparsed.engines, config.engines);
        assert_eq!(reparsed.token_ttl_seconds, config.token_ttl_seconds);
    }

    #[test]
    fn compromised_engines_need_fault_injection_enabled() {
        let text = "[[engine]]\nid = \"pe1\"\ncompromised = true\n";
        let config = SystemConfig::from_toml(text).unwrap();
        assert!(config.check_fault_policy(FaultInjection::Enabled).is_ok());
        let err = config.check_fault_policy(FaultInjection::Forbidden).unwrap_err();
        assert!(matches!(err, ConfigError::FaultInjectionInProduction(id) if id == "pe1"));
    }

    #[test]
    fn inconsistent_documents_are_refused() {
        assert!(matches!(
            SystemConfig::from_toml("token_ttl_seconds = 0").unwrap_err(),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(
            SystemConfig::from_toml("temperature_range = [60.0, -90.0]").unwrap_err(),
            ConfigError::Invalid(_)
        ));
        assert!(matches!(
            SystemConfig::from_toml("[ledger]\npeers = []").unwrap_err(),
            ConfigError::Invalid(_)
        ));
        let dup = "[[engine]]\nid = \"pe1\"\n[[engine]]\nid = \"pe1\"\n";
        assert!(matches!(
            SystemConfig::from_toml(dup).unwrap_err(),
            ConfigError::DuplicateEngineId(id) if id == "pe1"
        ));
        assert!(matches!(
            SystemConfig::from_toml("no_such_knob = 1").unwrap_err(),
            ConfigError::Parse(_)
        ));
    }

    #[test]
    fn rules_override_replaces_builtin_rules() {
        let text = r#"
            [rules.widget.read.widget_id]
            type = "text"
            required = true
        "#;
        let config = SystemConfig::from_toml(text).unwrap();
        let rules = config.rules.expect("rules section parsed");
        assert!(rules.lookup("widget", crate::model::RequestKind::Read).is_some());
        assert!(rules.lookup("temperature", crate::model::RequestKind::Read).is_none());
    }
}
