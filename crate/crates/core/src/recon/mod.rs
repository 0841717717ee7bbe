//! Per-link set reconciliation: short IDs, reconciliation sets, the
//! difference estimator, and the initiator/responder round state machines.

use std::collections::HashMap;
use std::fmt;
use std::hash::{BuildHasherDefault, Hasher};

use nohash_hasher::NoHashHasher;
use siphasher::sip::SipHasher24;
use thiserror::Error;

use crate::gf::{Field, GfError};
use crate::sketch::SketchError;

mod session;
pub mod wire;

pub use session::{
    BisectResult, Confirm, FallbackOutcome, FinishResult, Phase, ReconResponder, ReconSession, RoundOutcome, RoundPath,
    RoundRecord,
};

/// Full 256-bit transaction identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(pub [u8; 32]);

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId(")?;
        for b in &self.0[..6] {
            write!(f, "{b:02x}")?;
        }
        write!(f, "..)")
    }
}

/// Per-link salt chosen by the connection initiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkSalt(pub u64);

/// Salted, truncated transaction ID as stored in sketches. Never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShortId(u64);

impl nohash_hasher::IsEnabled for ShortId {}

impl ShortId {
    /// Wrap a raw sketch element. Zero is remapped to 1 like hashed IDs.
    pub fn from_raw(value: u64) -> ShortId {
        ShortId(value.max(1))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// SipHash-2-4 of the transaction ID keyed by the link salt, truncated to
/// `bits` bits, with 0 mapped to 1.
pub fn short_id(tx: &TxId, salt: LinkSalt, bits: u32) -> ShortId {
    let mut h = SipHasher24::new_with_keys(salt.0, 0);
    h.write(&tx.0);
    let mask = if bits >= 64 { u64::MAX } else { (1u64 << bits) - 1 };
    ShortId::from_raw(h.finish() & mask)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconError {
    #[error("{op} is not valid in phase {phase:?}")]
    OutOfPhase { op: &'static str, phase: Phase },
    #[error("peer claims a set of {claimed} entries, limit is {limit}")]
    SetTooLarge { claimed: usize, limit: usize },
    #[error("peer sent an invalid q coefficient {0}")]
    BadCoefficient(f64),
    #[error("received sketch has capacity {got}, expected {expected}")]
    CapacityMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Field(#[from] GfError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconParams {
    /// Short-ID and sketch element width.
    pub bits: u32,
    /// Additive constant of the difference estimator.
    pub c_const: u32,
    /// Upper clamp for q.
    pub q_max: f64,
    /// Largest set size a peer may claim before the session is aborted.
    pub max_set_size: usize,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams { bits: 64, c_const: 1, q_max: 2.0, max_set_size: 10_000 }
    }
}

impl ReconParams {
    pub fn field(&self) -> Result<Field, GfError> {
        Field::new(self.bits)
    }
}

/// `ceil(|a - b| + q * min(a, b) + c)`, at least 1.
pub fn estimate_diff(size_a: usize, size_b: usize, q: f64, c_const: u32) -> usize {
    let raw = size_a.abs_diff(size_b) as f64 + q * size_a.min(size_b) as f64 + c_const as f64;
    // Absorb rounding noise in q * min so exact integers do not ceil upward.
    let d = (raw - 1e-9).ceil();
    if d < 1.0 {
        1
    } else {
        d as usize
    }
}

/// `(D - |a - b|) / min(a, b)` clamped to `[0, q_max]`; `None` when the
/// smaller set is empty.
pub fn update_q(true_diff: usize, size_a: usize, size_b: usize, q_max: f64) -> Option<f64> {
    let min = size_a.min(size_b);
    if min == 0 {
        return None;
    }
    let q = (true_diff as f64 - size_a.abs_diff(size_b) as f64) / min as f64;
    Some(q.clamp(0.0, q_max))
}

pub(crate) type ShortMap<K> = HashMap<ShortId, K, BuildHasherDefault<NoHashHasher<ShortId>>>;

/// Result of inserting into a [`ReconSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Insert<K> {
    Added,
    AlreadyPresent,
    /// Another key already occupies this short ID; the new key was not
    /// stored and must be announced by full ID instead.
    Collision(K),
}

/// Transactions waiting to be reconciled with one peer, keyed by short ID.
#[derive(Debug, Clone)]
pub struct ReconSet<K> {
    entries: ShortMap<K>,
}

impl<K> Default for ReconSet<K> {
    fn default() -> Self {
        ReconSet { entries: ShortMap::default() }
    }
}

impl<K: Copy + Eq> ReconSet<K> {
    pub fn new() -> Self {
        ReconSet::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, short: ShortId, key: K) -> Insert<K> {
        match self.entries.get(&short) {
            None => {
                self.entries.insert(short, key);
                Insert::Added
            }
            Some(&k) if k == key => Insert::AlreadyPresent,
            Some(_) => Insert::Collision(key),
        }
    }

    /// Remove `key` if it is the entry stored under `short`.
    pub fn remove(&mut self, short: ShortId, key: K) -> bool {
        if self.entries.get(&short) == Some(&key) {
            self.entries.remove(&short);
            true
        } else {
            false
        }
    }

    pub fn get(&self, short: ShortId) -> Option<K> {
        self.entries.get(&short).copied()
    }

    pub fn contains(&self, short: ShortId) -> bool {
        self.entries.contains_key(&short)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ShortId, K)> + '_ {
        self.entries.iter().map(|(&s, &k)| (s, k))
    }

    pub(crate) fn take(&mut self) -> ShortMap<K> {
        std::mem::take(&mut self.entries)
    }
}
