//! Hash-chained blocks, chain verification, and the export wire format.
//!
//! Each block commits to its position, its predecessor's hash, its timestamp
//! and the canonical JSON of its transactions under a fixed domain tag.
//! Verification therefore detects any byte-level change to any committed
//! field and reports the first damaged index.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::model::HistoryRecord;

/// Format marker on the first line of an exported chain.
pub const CHAIN_FORMAT: &str = "ztbc-chain-v1";

/// Hash algorithm named in exports, for forward compatibility.
pub const DIGEST_ALGORITHM: &str = "sha-256";

/// Domain tag mixed into every block hash so block digests can never collide
/// with other SHA-256 uses of the same bytes.
const BLOCK_DOMAIN_TAG: &[u8] = b"ztbc-block-v1\n";

/// SHA-256 digest, serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockDigest([u8; 32]);

impl BlockDigest {
    pub const ZERO: BlockDigest = BlockDigest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(text: &str) -> Result<Self, hex::FromHexError> {
        let bytes = hex::decode(text)?;
        let array: [u8; 32] =
            bytes.try_into().map_err(|_| hex::FromHexError::InvalidStringLength)?;
        Ok(Self(array))
    }
}

impl std::fmt::Debug for BlockDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BlockDigest({}..)", &self.to_hex()[..8])
    }
}

impl std::fmt::Display for BlockDigest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for BlockDigest {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for BlockDigest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Self::from_hex(&text).map_err(serde::de::Error::custom)
    }
}

/// One committed block. `hash` covers every other field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: u64,
    pub prev_hash: BlockDigest,
    /// Milliseconds since the epoch at ordering time; 0 for genesis.
    pub timestamp: u64,
    pub transactions: Vec<HistoryRecord>,
    pub hash: BlockDigest,
}

impl Block {
    /// Hash over the committed fields: domain tag, index, predecessor hash,
    /// timestamp, transaction count and canonical transaction JSON.
    pub fn compute_hash(
        index: u64,
        prev_hash: &BlockDigest,
        timestamp: u64,
        transactions: &[HistoryRecord],
    ) -> BlockDigest {
        let mut hasher = Sha256::new();
        hasher.update(BLOCK_DOMAIN_TAG);
        hasher.update(index.to_le_bytes());
        hasher.update(prev_hash.as_bytes());
        hasher.update(timestamp.to_le_bytes());
        hasher.update((transactions.len() as u64).to_le_bytes());
        hasher.update(serde_json::to_vec(transactions).expect("records serialize"));
        BlockDigest(hasher.finalize().into())
    }

    /// The fixed first block every chain starts from: index 0, zero
    /// predecessor, timestamp 0, no transactions.
    pub fn genesis() -> Block {
        let hash = Self::compute_hash(0, &BlockDigest::ZERO, 0, &[]);
        Block { index: 0, prev_hash: BlockDigest::ZERO, timestamp: 0, transactions: Vec::new(), hash }
    }

    /// Builds the successor of `prev` holding `transactions`.
    pub fn next(prev: &Block, timestamp: u64, transactions: Vec<HistoryRecord>) -> Block {
        let index = prev.index + 1;
        let hash = Self::compute_hash(index, &prev.hash, timestamp, &transactions);
        Block { index, prev_hash: prev.hash, timestamp, transactions, hash }
    }

    /// True if the stored hash matches a recomputation over the stored
    /// fields.
    pub fn verify_hash(&self) -> bool {
        Self::compute_hash(self.index, &self.prev_hash, self.timestamp, &self.transactions)
            == self.hash
    }
}

/// Result of walking a chain front to back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChainAudit {
    pub length: usize,
    /// Lowest block index at which the chain is damaged, if any.
    pub first_invalid: Option<u64>,
}

impl ChainAudit {
    pub fn is_valid(&self) -> bool {
        self.first_invalid.is_none()
    }
}

/// Verifies a chain in ascending order: block 0 must equal the fixed genesis
/// block, and every later block must carry the right index, link to its
/// predecessor's hash, and hash to its stored digest. Returns the first
/// index that breaks any of these.
pub fn verify_chain(blocks: &[Block]) -> ChainAudit {
    let audit = |first_invalid| ChainAudit { length: blocks.len(), first_invalid };

    match blocks.first() {
        None => return audit(Some(0)),
        Some(first) if *first != Block::genesis() => return audit(Some(0)),
        Some(_) => {}
    }

    for (i, window) in blocks.windows(2).enumerate() {
        let (prev, block) = (&window[0], &window[1]);
        let expected_index = (i + 1) as u64;
        let intact = block.index == expected_index
            && block.prev_hash == prev.hash
            && block.verify_hash();
        if !intact {
            return audit(Some(expected_index));
        }
    }

    audit(None)
}

/// Failure reading an exported chain.
#[derive(Debug, Error)]
pub enum ImportError {
    #[error("io error reading chain: {0}")]
    Io(#[from] io::Error),
    #[error("bad export header: {0}")]
    BadHeader(String),
    #[error("bad block on line {line}: {source}")]
    BadBlock {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct ExportHeader {
    format: String,
    digest: String,
}

/// Writes a chain as one header line plus one JSON block per line.
pub fn export_chain(blocks: &[Block], writer: &mut impl Write) -> io::Result<()> {
    let header = ExportHeader {
        format: CHAIN_FORMAT.to_owned(),
        digest: DIGEST_ALGORITHM.to_owned(),
    };
    writeln!(writer, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for block in blocks {
        writeln!(writer, "{}", serde_json::to_string(block).expect("block serializes"))?;
    }
    Ok(())
}

/// Reads a chain previously written by [`export_chain`]. Parses only; run
/// [`verify_chain`] on the result to audit integrity.
pub fn import_chain(reader: impl BufRead) -> Result<Vec<Block>, ImportError> {
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| ImportError::BadHeader("empty file".into()))??;
    let header: ExportHeader = serde_json::from_str(&header_line)
        .map_err(|e| ImportError::BadHeader(e.to_string()))?;
    if header.format != CHAIN_FORMAT {
        return Err(ImportError::BadHeader(format!("unsupported format `{}`", header.format)));
    }
    if header.digest != DIGEST_ALGORITHM {
        return Err(ImportError::BadHeader(format!("unsupported digest `{}`", header.digest)));
    }

    let mut blocks = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let block =
            serde_json::from_str(&line).map_err(|source| ImportError::BadBlock { line: i + 2, source })?;
        blocks.push(block);
    }
    Ok(blocks)
}
