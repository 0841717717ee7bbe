//! Independent RNG streams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use erlay_core::recon::TxId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Latency,
    Roles,
    Salts,
    Schedule,
    Timers,
}

impl Stream {
    fn label(self) -> &'static [u8] {
        match self {
            Stream::Topology => b"topology",
            Stream::Latency => b"latency",
            Stream::Roles => b"roles",
            Stream::Salts => b"salts",
            Stream::Schedule => b"schedule",
            Stream::Timers => b"timers",
        }
    }
}

fn digest(seed: u64, label: &[u8], index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label);
    h.update(index.to_le_bytes());
    h.finalize().into()
}

pub fn rng_for(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(digest(seed, stream.label(), index))
}

/// Transaction `index` of the run with `seed`.
pub fn tx_id(seed: u64, index: u64) -> TxId {
    TxId(digest(seed, b"txid", index))
}
