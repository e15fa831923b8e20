//! Embedded permissioned ledger: one ordering service, replicated peers,
//! and per-actor world state.
//!
//! Decided requests are submitted as transactions through an authenticated
//! peer client. The ordering task batches them into hash-chained blocks
//! (batch size 1 by default — one decision, one block) and replicates each
//! block to every online peer. Peers answer history queries from their own
//! replica without touching the orderer, so reads stay available while
//! ordering is paused or backlogged. A peer that was down catches up from
//! the canonical chain when it recovers.

pub mod block;

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot, Notify};

use crate::clock::Clock;
use crate::history::{DecisionLog, DecisionLogError, HistorySource, HistoryUnavailable};
use crate::model::{HistoryRecord, RequestId};
use crate::tasks::TaskGauge;

pub use block::{
    export_chain, import_chain, verify_chain, Block, BlockDigest, ChainAudit, CHAIN_FORMAT,
    DIGEST_ALGORITHM,
};

/// Ledger operation failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("unknown peer `{0}`")]
    UnknownPeer(String),
    #[error("peer `{0}` rejected the presented credentials")]
    Unauthorized(String),
    #[error("peer `{0}` is offline")]
    PeerOffline(String),
    #[error("transaction for request `{0}` was already committed")]
    DuplicateTransaction(RequestId),
    #[error("ordering service unavailable")]
    OrdererUnavailable,
}

/// Ledger topology and batching knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerConfig {
    /// Peer identifiers; the first one is conventionally the logging peer.
    #[serde(default = "default_peers")]
    pub peers: Vec<String>,
    /// Transactions per block; 1 keeps one decision per block.
    #[serde(default = "default_batch_size")]
    pub block_batch_size: usize,
    /// Simulated replication latency from orderer to peers. 0 replicates
    /// inline before the submit call returns.
    #[serde(default)]
    pub replication_delay_ms: u64,
}

fn default_peers() -> Vec<String> {
    vec!["peer1".into(), "peer2".into(), "peer3".into()]
}

fn default_batch_size() -> usize {
    1
}

impl Default for LedgerConfig {
    fn default() -> Self {
        Self {
            peers: default_peers(),
            block_batch_size: default_batch_size(),
            replication_delay_ms: 0,
        }
    }
}

/// Credentials an application presents to a peer. Obtained from
/// [`Ledger::client`]; constructed manually only to test rejection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerCredentials {
    pub peer_id: String,
    pub secret: String,
}

/// Proof that a transaction was committed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommitReceipt {
    pub request_id: RequestId,
    pub block_index: u64,
    pub block_hash: BlockDigest,
}

/// Location of one transaction: which block, which position inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRef {
    pub block: u64,
    pub tx: usize,
}

/// Derived per-actor index over the chain, maintained incrementally and
/// reconstructible from the blocks alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldState {
    by_actor: BTreeMap<String, Vec<TxRef>>,
}

impl WorldState {
    /// Folds one committed block into the index.
    pub fn index_block(&mut self, block: &Block) {
        for (tx, record) in block.transactions.iter().enumerate() {
            self.by_actor
                .entry(record.actor_id.clone())
                .or_default()
                .push(TxRef { block: block.index, tx });
        }
    }

    /// Rebuilds the full index from a chain; equality with the live index is
    /// the world-state integrity check.
    pub fn rebuild(chain: &[Block]) -> WorldState {
        let mut state = WorldState::default();
        for block in chain {
            state.index_block(block);
        }
        state
    }

    pub fn refs_for(&self, actor_id: &str) -> &[TxRef] {
        self.by_actor.get(actor_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn actor_count(&self) -> usize {
        self.by_actor.len()
    }
}

#[derive(Debug)]
struct PeerState {
    chain: Vec<Block>,
    world: WorldState,
    online: bool,
}

impl PeerState {
    fn new() -> Self {
        let genesis = Block::genesis();
        let mut world = WorldState::default();
        world.index_block(&genesis);
        Self { chain: vec![genesis], world, online: true }
    }

    /// Appends any canonical blocks this peer is missing.
    fn catch_up(&mut self, canonical: &[Block]) {
        for block in &canonical[self.chain.len()..] {
            self.world.index_block(block);
            self.chain.push(block.clone());
        }
    }
}

struct CanonicalState {
    chain: Vec<Block>,
    committed_requests: HashSet<RequestId>,
}

struct SubmitJob {
    record: HistoryRecord,
    reply: oneshot::Sender<Result<CommitReceipt, LedgerError>>,
}

struct LedgerShared {
    config: LedgerConfig,
    secrets: BTreeMap<String, String>,
    canonical: Mutex<CanonicalState>,
    peers: Mutex<BTreeMap<String, PeerState>>,
    paused: AtomicBool,
    resume: Notify,
    gauge: Arc<TaskGauge>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for LedgerShared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("peers", &self.config.peers)
            .field("paused", &self.paused.load(AtomicOrdering::SeqCst))
            .finish()
    }
}

/// The ledger network handle. Creating one spawns the ordering task on the
/// current tokio runtime.
#[derive(Debug, Clone)]
pub struct Ledger {
    shared: Arc<LedgerShared>,
    submit_tx: mpsc::UnboundedSender<SubmitJob>,
}

impl Ledger {
    /// Builds the peer network and spawns the ordering service. Must run
    /// inside a tokio runtime.
    pub fn spawn(config: LedgerConfig, clock: Arc<dyn Clock>) -> Ledger {
        assert!(!config.peers.is_empty(), "ledger needs at least one peer");
        assert!(config.block_batch_size >= 1, "batch size must be positive");

        let secrets = config
            .peers
            .iter()
            .map(|p| (p.clone(), format!("{p}:{}", uuid::Uuid::new_v4())))
            .collect();
        let peers =
            config.peers.iter().map(|p| (p.clone(), PeerState::new())).collect();

        let genesis = Block::genesis();
        let shared = Arc::new(LedgerShared {
            config,
            secrets,
            canonical: Mutex::new(CanonicalState {
                chain: vec![genesis],
                committed_requests: HashSet::new(),
            }),
            peers: Mutex::new(peers),
            paused: AtomicBool::new(false),
            resume: Notify::new(),
            gauge: TaskGauge::new(),
            clock,
        });

        let (submit_tx, submit_rx) = mpsc::unbounded_channel();
        tokio::spawn(run_orderer(Arc::clone(&shared), submit_rx));

        Ledger { shared, submit_tx }
    }

    /// Authenticated client bound to one peer.
    pub fn client(&self, peer_id: &str) -> Result<LedgerClient, LedgerError> {
        let secret = self
            .shared
            .secrets
            .get(peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))?;
        Ok(LedgerClient {
            ledger: self.clone(),
            credentials: PeerCredentials { peer_id: peer_id.to_owned(), secret: secret.clone() },
        })
    }

    fn authenticate(&self, credentials: &PeerCredentials) -> Result<(), LedgerError> {
        match self.shared.secrets.get(&credentials.peer_id) {
            None => Err(LedgerError::UnknownPeer(credentials.peer_id.clone())),
            Some(secret) if *secret != credentials.secret => {
                Err(LedgerError::Unauthorized(credentials.peer_id.clone()))
            }
            Some(_) => Ok(()),
        }
    }

    /// Submits one decided request for ordering and waits for the commit
    /// receipt.
    pub async fn submit(
        &self,
        credentials: &PeerCredentials,
        record: HistoryRecord,
    ) -> Result<CommitReceipt, LedgerError> {
        self.authenticate(credentials)?;
        self.peer_online(&credentials.peer_id)?;
        let (reply_tx, reply_rx) = oneshot::channel();
        self.submit_tx
            .send(SubmitJob { record, reply: reply_tx })
            .map_err(|_| LedgerError::OrdererUnavailable)?;
        reply_rx.await.map_err(|_| LedgerError::OrdererUnavailable)?
    }

    fn peer_online(&self, peer_id: &str) -> Result<(), LedgerError> {
        let peers = self.shared.peers.lock().unwrap();
        let peer = peers.get(peer_id).ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))?;
        if peer.online {
            Ok(())
        } else {
            Err(LedgerError::PeerOffline(peer_id.to_owned()))
        }
    }

    /// Most recent decisions for an actor, newest first, answered entirely
    /// from the peer's replica — no ordering involvement.
    pub fn query_history(
        &self,
        credentials: &PeerCredentials,
        actor_id: &str,
        limit: usize,
    ) -> Result<Vec<HistoryRecord>, LedgerError> {
        self.authenticate(credentials)?;
        let peers = self.shared.peers.lock().unwrap();
        let peer = peers
            .get(&credentials.peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(credentials.peer_id.clone()))?;
        if !peer.online {
            return Err(LedgerError::PeerOffline(credentials.peer_id.clone()));
        }
        let records = peer
            .world
            .refs_for(actor_id)
            .iter()
            .rev()
            .take(limit)
            .map(|r| peer.chain[r.block as usize].transactions[r.tx].clone())
            .collect();
        Ok(records)
    }

    /// Full copy of a peer's chain (for export and audits).
    pub fn chain_snapshot(&self, credentials: &PeerCredentials) -> Result<Vec<Block>, LedgerError> {
        self.authenticate(credentials)?;
        let peers = self.shared.peers.lock().unwrap();
        let peer = peers
            .get(&credentials.peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(credentials.peer_id.clone()))?;
        if !peer.online {
            return Err(LedgerError::PeerOffline(credentials.peer_id.clone()));
        }
        Ok(peer.chain.clone())
    }

    /// Audits a peer's replica: hash-chain walk plus world-state rebuild.
    pub fn audit_peer(&self, peer_id: &str) -> Result<PeerAudit, LedgerError> {
        let peers = self.shared.peers.lock().unwrap();
        let peer = peers.get(peer_id).ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))?;
        let chain = verify_chain(&peer.chain);
        let world_state_consistent = WorldState::rebuild(&peer.chain) == peer.world;
        Ok(PeerAudit { peer_id: peer_id.to_owned(), chain, world_state_consistent })
    }

    /// Takes a peer offline or brings it back; recovery immediately catches
    /// the replica up to the canonical chain.
    pub fn set_peer_online(&self, peer_id: &str, online: bool) -> Result<(), LedgerError> {
        let canonical = if online {
            Some(self.shared.canonical.lock().unwrap().chain.clone())
        } else {
            None
        };
        let mut peers = self.shared.peers.lock().unwrap();
        let peer = peers
            .get_mut(peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))?;
        peer.online = online;
        if let Some(chain) = canonical {
            peer.catch_up(&chain);
        }
        Ok(())
    }

    /// Pauses or resumes ordering. Pending submissions queue up; peer reads
    /// keep answering from their replicas.
    pub fn set_ordering_paused(&self, paused: bool) {
        self.shared.paused.store(paused, AtomicOrdering::SeqCst);
        if !paused {
            self.shared.resume.notify_waiters();
        }
    }

    /// Fault-injection hook for integrity tests: mutate one peer's replica
    /// in place (simulated storage corruption). Never touches the canonical
    /// chain or other peers.
    pub fn corrupt_peer_chain(
        &self,
        peer_id: &str,
        mutate: impl FnOnce(&mut Vec<Block>),
    ) -> Result<(), LedgerError> {
        let mut peers = self.shared.peers.lock().unwrap();
        let peer = peers
            .get_mut(peer_id)
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))?;
        mutate(&mut peer.chain);
        Ok(())
    }

    pub fn block_height(&self, peer_id: &str) -> Result<usize, LedgerError> {
        let peers = self.shared.peers.lock().unwrap();
        peers
            .get(peer_id)
            .map(|p| p.chain.len())
            .ok_or_else(|| LedgerError::UnknownPeer(peer_id.to_owned()))
    }

    pub fn peer_ids(&self) -> Vec<String> {
        self.shared.config.peers.clone()
    }

    /// Gauge tracking delayed replication tasks; quiesce to be sure every
    /// peer has applied every committed block.
    pub fn gauge(&self) -> Arc<TaskGauge> {
        Arc::clone(&self.shared.gauge)
    }
}

/// Outcome of [`Ledger::audit_peer`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeerAudit {
    pub peer_id: String,
    pub chain: ChainAudit,
    /// True if the live per-actor index equals a fresh rebuild of the chain.
    pub world_state_consistent: bool,
}

impl PeerAudit {
    pub fn is_clean(&self) -> bool {
        self.chain.is_valid() && self.world_state_consistent
    }
}

async fn run_orderer(shared: Arc<LedgerShared>, mut rx: mpsc::UnboundedReceiver<SubmitJob>) {
    while let Some(first) = rx.recv().await {
        while shared.paused.load(AtomicOrdering::SeqCst) {
            let resumed = shared.resume.notified();
            if !shared.paused.load(AtomicOrdering::SeqCst) {
                break;
            }
            resumed.await;
        }

        let mut batch = vec![first];
        while batch.len() < shared.config.block_batch_size {
            match rx.try_recv() {
                Ok(job) => batch.push(job),
                Err(_) => break,
            }
        }

        commit_batch(&shared, batch);
    }
}

fn commit_batch(shared: &Arc<LedgerShared>, batch: Vec<SubmitJob>) {
    let mut canonical = shared.canonical.lock().unwrap();

    let mut records = Vec::new();
    let mut replies = Vec::new();
    for job in batch {
        let id = job.record.request_id.clone();
        if canonical.committed_requests.contains(&id)
            || records.iter().any(|r: &HistoryRecord| r.request_id == id)
        {
            let _ = job.reply.send(Err(LedgerError::DuplicateTransaction(id)));
            continue;
        }
        records.push(job.record);
        replies.push(job.reply);
    }
    if records.is_empty() {
        return;
    }

    let prev = canonical.chain.last().expect("chain starts at genesis");
    let block = Block::next(prev, shared.clock.now_millis(), records);
    let committed_ids: Vec<RequestId> =
        block.transactions.iter().map(|r| r.request_id.clone()).collect();
    for id in &committed_ids {
        canonical.committed_requests.insert(id.clone());
    }
    let (block_index, block_hash) = (block.index, block.hash);
    canonical.chain.push(block.clone());
    drop(canonical);

    // Replication: inline when instantaneous, spawned and gauge-tracked when
    // the configured propagation delay is nonzero.
    if shared.config.replication_delay_ms == 0 {
        let mut peers = shared.peers.lock().unwrap();
        for peer in peers.values_mut().filter(|p| p.online) {
            // Online peers are in lockstep here; a peer that raced a
            // recovery catch-up already holds the block and is skipped.
            if peer.chain.len() as u64 == block.index {
                peer.world.index_block(&block);
                peer.chain.push(block.clone());
            }
        }
    } else {
        let delay = Duration::from_millis(shared.config.replication_delay_ms);
        let task_shared = Arc::clone(shared);
        let guard = shared.gauge.track();
        tokio::spawn(async move {
            let _guard = guard;
            tokio::time::sleep(delay).await;
            let canonical = task_shared.canonical.lock().unwrap().chain.clone();
            let mut peers = task_shared.peers.lock().unwrap();
            for peer in peers.values_mut().filter(|p| p.online) {
                peer.catch_up(&canonical);
            }
        });
    }

    for (reply, request_id) in replies.into_iter().zip(committed_ids) {
        let _ = reply.send(Ok(CommitReceipt { request_id, block_index, block_hash }));
    }
}

/// Application-facing handle bound to one peer: the logging peer submits
/// decisions, the monitoring peer serves history reads.
#[derive(Debug, Clone)]
pub struct LedgerClient {
    ledger: Ledger,
    credentials: PeerCredentials,
}

impl LedgerClient {
    pub fn peer_id(&self) -> &str {
        &self.credentials.peer_id
    }

    pub fn credentials(&self) -> &PeerCredentials {
        &self.credentials
    }

    pub async fn submit(&self, record: HistoryRecord) -> Result<CommitReceipt, LedgerError> {
        self.ledger.submit(&self.credentials, record).await
    }

    pub fn query_history(
        &self,
        actor_id: &str,
        limit: usize,
    ) -> Result<Vec<HistoryRecord>, LedgerError> {
        self.ledger.query_history(&self.credentials, actor_id, limit)
    }

    pub fn export(&self) -> Result<Vec<Block>, LedgerError> {
        self.ledger.chain_snapshot(&self.credentials)
    }
}

impl HistorySource for LedgerClient {
    fn recent(
        &self,
        actor_id: &str,
        limit: usize,
    ) -> Result<Vec<HistoryRecord>, HistoryUnavailable> {
        self.query_history(actor_id, limit)
            .map_err(|e| HistoryUnavailable(e.to_string()))
    }
}

#[async_trait]
impl DecisionLog for LedgerClient {
    async fn record(&self, record: HistoryRecord) -> Result<(), DecisionLogError> {
        self.submit(record).await.map(|_| ()).map_err(|e| DecisionLogError(e.to_string()))
    }
}
