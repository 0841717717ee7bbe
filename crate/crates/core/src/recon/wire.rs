//! Simulated wire vocabulary. Sizes live in the simulator's byte model.

use super::ShortId;
use crate::sketch::Sketch;

/// Why an announcement was sent; determines its byte class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvKind {
    Flood,
    /// Announcing transactions a reconciliation found the peer missing.
    PostRecon,
    /// Full reconciliation-set exchange after a failed bisection.
    Fallback,
    /// Short-ID collision victims, announced by full ID.
    Evicted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconRequest {
    pub set_size: usize,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconSketchResponse {
    pub sketch: Sketch,
    pub set_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message<K> {
    Inv { items: Vec<K>, kind: InvKind },
    GetData { items: Vec<K> },
    Tx { items: Vec<K> },
    ReconRequest(ReconRequest),
    ReconSketch(ReconSketchResponse),
    BisectRequest,
    BisectResponse { sketch: Sketch },
    /// Ends a round. With `fallback` set the responder replies with its
    /// whole reconciliation set instead of transactions.
    ShortIdTxRequest { ids: Vec<ShortId>, fallback: bool },
    TxResponse { items: Vec<K>, not_found: Vec<ShortId> },
}
