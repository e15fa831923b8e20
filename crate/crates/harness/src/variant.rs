//! The five system variants compared by the benchmark harness.
//!
//! Each variant answers two questions: does the deployment validate through
//! the zero-trust pipeline at all, and does it log decisions to the
//! replicated ledger or to a plain in-memory table? The x4 variants
//! quadruple the engine replicas on the same worker pool to expose
//! validation contention.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Perimeter model: one identity check at the gateway, direct execution,
    /// no engines, no decision log.
    Conventional,
    /// Zero-trust pipeline, 3 engines, plain in-memory decision log.
    NoBc,
    /// Zero-trust pipeline, 12 engines, plain in-memory decision log.
    NoBcX4,
    /// Zero-trust pipeline, 3 engines, replicated hash-chained ledger.
    ZtaBc,
    /// Zero-trust pipeline, 12 engines, replicated hash-chained ledger.
    ZtaBcX4,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Self::Conventional, Self::NoBc, Self::NoBcX4, Self::ZtaBc, Self::ZtaBcX4];

    pub fn label(self) -> &'static str {
        match self {
            Self::Conventional => "CONVENTIONAL",
            Self::NoBc => "NO_BC",
            Self::NoBcX4 => "NO_BC_X4",
            Self::ZtaBc => "ZTA_BC",
            Self::ZtaBcX4 => "ZTA_BC_X4",
        }
    }

    /// Engine replicas in the standard configuration of this variant.
    pub fn engine_count(self) -> usize {
        match self {
            Self::Conventional => 0,
            Self::NoBc | Self::ZtaBc => 3,
            Self::NoBcX4 | Self::ZtaBcX4 => 12,
        }
    }

    pub fn is_zero_trust(self) -> bool {
        self != Self::Conventional
    }

    pub fn uses_ledger(self) -> bool {
        matches!(self, Self::ZtaBc | Self::ZtaBcX4)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variant `{0}` (expected one of CONVENTIONAL, NO_BC, NO_BC_X4, ZTA_BC, ZTA_BC_X4)")]
pub struct UnknownVariant(String);

impl FromStr for Variant {
    type Err = UnknownVariant;

    /// Accepts the canonical labels in any case, with `-` or `_` separators.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.label() == normalized)
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}
