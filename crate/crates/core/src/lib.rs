//! Zero-trust access control for edge deployments, backed by an embedded
//! permissioned ledger.
//!
//! Every request enters through a policy enforcement point ([`gateway::Pep`]),
//! is validated by a set of replicated policy engines ([`engine::PolicyEngine`])
//! that each run the same four-stage trust algorithm, and is decided by
//! majority vote ([`consensus`]) coordinated by a policy administrator
//! ([`admin::PolicyAdmin`]). Granted requests receive a short-lived,
//! single-use, scope-bound access token that the target persistence manager
//! ([`pm`]) verifies before touching storage. Every decided request — granted
//! or rejected — is appended to a hash-chained, replicated decision log
//! ([`ledger`]), which doubles as the history source for the behavioral check.
//!
//! The crate is transport-agnostic: components are plain structs wired
//! together in-process, and all time flows through [`clock::Clock`] so the
//! whole stack runs deterministically under tokio's paused test time.

pub mod admin;
pub mod broker;
pub mod clock;
pub mod config;
pub mod consensus;
pub mod engine;
pub mod gateway;
pub mod history;
pub mod ledger;
pub mod metrics;
pub mod model;
pub mod pm;
pub mod tasks;
pub mod validators;
