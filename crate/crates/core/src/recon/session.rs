use std::collections::HashSet;
use std::hash::Hash;

use super::wire::{ReconRequest, ReconSketchResponse};
use super::{estimate_diff, update_q, Insert, ReconError, ReconParams, ReconSet, ShortId, ShortMap};
use crate::gf::Field;
use crate::sketch::{IdRange, Sketch};

/// Initiator phase. A round moves strictly forward through these and ends
/// in `Done`; the next round starts from there.
///
/// `AwaitTx` holds a decoded round until the responder confirms every
/// requested short ID. A not-found reply means the decode was wrong and
/// escalates to bisection (after a direct decode) or fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Idle,
    AwaitSketch,
    AwaitTx(RoundPath),
    AwaitBisect,
    Fallback,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoundPath {
    Direct,
    Bisect,
    Fallback,
}

impl RoundPath {
    pub fn as_str(self) -> &'static str {
        match self {
            RoundPath::Direct => "direct",
            RoundPath::Bisect => "bisect",
            RoundPath::Fallback => "fallback",
        }
    }
}

/// Summary of one finished round as seen by the initiator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub size_local: usize,
    pub size_remote: usize,
    /// Estimated difference, which is also the sketch capacity.
    pub estimate: usize,
    pub true_diff: usize,
    pub path: RoundPath,
    pub q_before: f64,
    pub q_after: f64,
}

impl RoundRecord {
    pub fn estimate_correct(&self) -> bool {
        self.true_diff <= self.estimate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome<K> {
    /// Short IDs the responder has and we lack; request them.
    pub missing_local: Vec<ShortId>,
    /// Our transactions the responder lacks; announce them.
    pub missing_remote: Vec<K>,
    /// Present when the round closed at once because nothing had to be
    /// requested; otherwise it comes from [`ReconSession::confirm`].
    pub record: Option<RoundRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Confirm {
    Done(RoundRecord),
    BisectNeeded,
    FallbackNeeded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FinishResult<K> {
    Done(RoundOutcome<K>),
    BisectNeeded,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BisectResult<K> {
    Done(RoundOutcome<K>),
    FallbackNeeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackOutcome<K> {
    pub missing_local: Vec<K>,
    pub missing_remote: Vec<K>,
    pub record: RoundRecord,
}

fn sorted_keys<K: Copy>(map: &ShortMap<K>) -> Vec<K> {
    let mut entries: Vec<(ShortId, K)> = map.iter().map(|(&s, &k)| (s, k)).collect();
    entries.sort_unstable_by_key(|&(s, _)| s);
    entries.into_iter().map(|(_, k)| k).collect()
}

fn sketch_of<K>(field: Field, capacity: usize, map: &ShortMap<K>, range: Option<IdRange>) -> Sketch {
    let ids = map.keys().map(|s| s.value());
    let sketch = match range {
        None => Sketch::from_elements(field, capacity, ids),
        Some(r) => Sketch::subset(field, capacity, ids, r),
    };
    sketch.expect("short IDs are nonzero and in range")
}

fn restore<K: Copy + Eq>(set: &mut ReconSet<K>, snapshot: ShortMap<K>) -> Vec<K> {
    let mut evicted = Vec::new();
    for (short, key) in snapshot {
        if let Insert::Collision(k) = set.insert(short, key) {
            evicted.push(k);
        }
    }
    evicted
}

/// Initiator side of a link: the only side that ever decodes.
#[derive(Debug, Clone)]
pub struct ReconSession<K> {
    params: ReconParams,
    field: Field,
    set: ReconSet<K>,
    q: f64,
    phase: Phase,
    sent_size: usize,
    snapshot: ShortMap<K>,
    remote_size: usize,
    estimate: usize,
    full_diff: Option<Sketch>,
    decoded: usize,
}

impl<K: Copy + Eq + Hash> ReconSession<K> {
    pub fn new(params: ReconParams) -> Result<Self, ReconError> {
        Ok(ReconSession {
            field: params.field()?,
            params,
            set: ReconSet::new(),
            q: 0.0,
            phase: Phase::Idle,
            sent_size: 0,
            snapshot: ShortMap::default(),
            remote_size: 0,
            estimate: 0,
            full_diff: None,
            decoded: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Override q, for experiments with a fixed coefficient.
    pub fn set_q(&mut self, q: f64) {
        self.q = q.clamp(0.0, self.params.q_max);
    }

    pub fn params(&self) -> &ReconParams {
        &self.params
    }

    pub fn in_flight(&self) -> bool {
        !matches!(self.phase, Phase::Idle | Phase::Done)
    }

    /// Transactions waiting for the next round (not the in-flight snapshot).
    pub fn set(&self) -> &ReconSet<K> {
        &self.set
    }

    pub fn set_mut(&mut self) -> &mut ReconSet<K> {
        &mut self.set
    }

    fn expect_phase(&self, want: Phase, op: &'static str) -> Result<(), ReconError> {
        if self.phase == want {
            Ok(())
        } else {
            Err(ReconError::OutOfPhase { op, phase: self.phase })
        }
    }

    pub fn begin_round(&mut self) -> Result<ReconRequest, ReconError> {
        if self.in_flight() {
            return Err(ReconError::OutOfPhase { op: "begin_round", phase: self.phase });
        }
        self.phase = Phase::AwaitSketch;
        self.sent_size = self.set.len();
        Ok(ReconRequest { set_size: self.sent_size, q: self.q })
    }

    /// Abandon an in-flight round, returning the snapshot to the set. Keys
    /// that now collide with newer entries are returned for full-ID
    /// announcement.
    pub fn abort(&mut self) -> Vec<K> {
        let snapshot = std::mem::take(&mut self.snapshot);
        self.full_diff = None;
        self.phase = Phase::Idle;
        restore(&mut self.set, snapshot)
    }

    pub fn finish_round(&mut self, response: &ReconSketchResponse) -> Result<FinishResult<K>, ReconError> {
        self.expect_phase(Phase::AwaitSketch, "finish_round")?;
        if response.set_size > self.params.max_set_size {
            self.abort();
            return Err(ReconError::SetTooLarge { claimed: response.set_size, limit: self.params.max_set_size });
        }
        // The capacity must be what an honest responder derives from our
        // request, so a peer cannot force an oversized decode.
        let expected = estimate_diff(self.sent_size, response.set_size, self.q, self.params.c_const);
        if response.sketch.capacity() != expected || response.sketch.field() != self.field {
            self.abort();
            return Err(ReconError::CapacityMismatch { expected, got: response.sketch.capacity() });
        }
        self.snapshot = self.set.take();
        self.remote_size = response.set_size;
        self.estimate = expected;
        let local = sketch_of(self.field, expected, &self.snapshot, None);
        let diff = local.merged(&response.sketch)?;
        // Roughly half the difference is ours; testing those IDs directly
        // is much cheaper than splitting the whole locator.
        let hints: Vec<u64> = self.snapshot.keys().map(|id| id.value()).collect();
        match diff.decode_hinted(&hints) {
            Ok(elements) => {
                self.full_diff = Some(diff);
                Ok(FinishResult::Done(self.conclude(&elements, RoundPath::Direct)))
            }
            Err(_) => {
                self.full_diff = Some(diff);
                self.phase = Phase::AwaitBisect;
                Ok(FinishResult::BisectNeeded)
            }
        }
    }

    /// Check that a bisection request may be sent now.
    pub fn bisect_request(&self) -> Result<(), ReconError> {
        self.expect_phase(Phase::AwaitBisect, "bisect_request")
    }

    /// Combine the responder's low-half sketch with the stored full
    /// difference; both halves must decode.
    pub fn bisect_round(&mut self, remote_low: &Sketch) -> Result<BisectResult<K>, ReconError> {
        self.expect_phase(Phase::AwaitBisect, "bisect_round")?;
        if remote_low.capacity() != self.estimate || remote_low.field() != self.field {
            return Err(ReconError::CapacityMismatch { expected: self.estimate, got: remote_low.capacity() });
        }
        let bits = self.field.bits();
        let low_range = IdRange::low_half(bits);
        let local_low = sketch_of(self.field, self.estimate, &self.snapshot, Some(low_range));
        let low_diff = local_low.merged(remote_low)?;
        let full = self.full_diff.take().expect("stored before bisection");
        let high_diff = full.merged(&low_diff)?;
        let hints: Vec<u64> = self.snapshot.keys().map(|id| id.value()).collect();
        let halves = (low_diff.decode_hinted(&hints), high_diff.decode_hinted(&hints));
        if let (Ok(mut low), Ok(high)) = halves {
            let high_range = IdRange::high_half(bits);
            if low.iter().all(|&e| low_range.contains(e)) && high.iter().all(|&e| high_range.contains(e)) {
                low.extend(high);
                return Ok(BisectResult::Done(self.conclude(&low, RoundPath::Bisect)));
            }
        }
        self.phase = Phase::Fallback;
        Ok(BisectResult::FallbackNeeded)
    }

    fn conclude(&mut self, elements: &[u64], path: RoundPath) -> RoundOutcome<K> {
        let mut missing_local = Vec::new();
        let mut missing_remote = Vec::new();
        for &e in elements {
            let short = ShortId::from_raw(e);
            match self.snapshot.get(&short) {
                Some(&k) => missing_remote.push(k),
                None => missing_local.push(short),
            }
        }
        self.decoded = elements.len();
        let record = if missing_local.is_empty() {
            Some(self.close(elements.len(), path))
        } else {
            self.phase = Phase::AwaitTx(path);
            None
        };
        RoundOutcome { missing_local, missing_remote, record }
    }

    /// Feed back the responder's not-found list for our short-ID request.
    pub fn confirm(&mut self, not_found: &[ShortId]) -> Result<Confirm, ReconError> {
        let Phase::AwaitTx(path) = self.phase else {
            return Err(ReconError::OutOfPhase { op: "confirm", phase: self.phase });
        };
        if not_found.is_empty() {
            return Ok(Confirm::Done(self.close(self.decoded, path)));
        }
        if path == RoundPath::Direct {
            self.phase = Phase::AwaitBisect;
            Ok(Confirm::BisectNeeded)
        } else {
            self.full_diff = None;
            self.phase = Phase::Fallback;
            Ok(Confirm::FallbackNeeded)
        }
    }

    fn close(&mut self, true_diff: usize, path: RoundPath) -> RoundRecord {
        let size_local = self.snapshot.len();
        let q_before = self.q;
        if let Some(q) = update_q(true_diff, size_local, self.remote_size, self.params.q_max) {
            self.q = q;
        }
        self.snapshot.clear();
        self.full_diff = None;
        self.phase = Phase::Done;
        RoundRecord {
            size_local,
            size_remote: self.remote_size,
            estimate: self.estimate,
            true_diff,
            path,
            q_before,
            q_after: self.q,
        }
    }

    /// Our whole snapshot, to be announced by full ID during fallback.
    pub fn fallback_announcements(&self) -> Result<Vec<K>, ReconError> {
        self.expect_phase(Phase::Fallback, "fallback_announcements")?;
        Ok(sorted_keys(&self.snapshot))
    }

    /// Finish the round from the responder's full set listing.
    pub fn fallback_round(&mut self, remote: &[K]) -> Result<FallbackOutcome<K>, ReconError> {
        self.expect_phase(Phase::Fallback, "fallback_round")?;
        let local: HashSet<K> = self.snapshot.values().copied().collect();
        let remote_set: HashSet<K> = remote.iter().copied().collect();
        let missing_local: Vec<K> = remote.iter().copied().filter(|k| !local.contains(k)).collect();
        let missing_remote: Vec<K> =
            sorted_keys(&self.snapshot).into_iter().filter(|k| !remote_set.contains(k)).collect();
        self.remote_size = remote_set.len();
        let record = self.close(missing_local.len() + missing_remote.len(), RoundPath::Fallback);
        Ok(FallbackOutcome { missing_local, missing_remote, record })
    }
}

/// Responder side of a link. It builds sketches on request but never
/// decodes.
#[derive(Debug, Clone)]
pub struct ReconResponder<K> {
    params: ReconParams,
    field: Field,
    set: ReconSet<K>,
    snapshot: Option<ShortMap<K>>,
    capacity: usize,
}

impl<K: Copy + Eq + Hash> ReconResponder<K> {
    pub fn new(params: ReconParams) -> Result<Self, ReconError> {
        Ok(ReconResponder { field: params.field()?, params, set: ReconSet::new(), snapshot: None, capacity: 0 })
    }

    pub fn set(&self) -> &ReconSet<K> {
        &self.set
    }

    pub fn set_mut(&mut self) -> &mut ReconSet<K> {
        &mut self.set
    }

    pub fn serving(&self) -> bool {
        self.snapshot.is_some()
    }

    /// Answer a round request with a sketch of our set. A snapshot left
    /// over from an abandoned round is folded back first; any keys that
    /// collide on the way are returned in the second slot.
    pub fn serve_round(&mut self, request: &ReconRequest) -> Result<(ReconSketchResponse, Vec<K>), ReconError> {
        if request.set_size > self.params.max_set_size {
            return Err(ReconError::SetTooLarge { claimed: request.set_size, limit: self.params.max_set_size });
        }
        if !request.q.is_finite() || request.q < 0.0 || request.q > self.params.q_max {
            return Err(ReconError::BadCoefficient(request.q));
        }
        let evicted = match self.snapshot.take() {
            Some(stale) => restore(&mut self.set, stale),
            None => Vec::new(),
        };
        let snapshot = self.set.take();
        let size = snapshot.len();
        self.capacity = estimate_diff(request.set_size, size, request.q, self.params.c_const);
        let sketch = sketch_of(self.field, self.capacity, &snapshot, None);
        self.snapshot = Some(snapshot);
        Ok((ReconSketchResponse { sketch, set_size: size }, evicted))
    }

    pub fn serve_bisect(&self) -> Result<Sketch, ReconError> {
        let snapshot = self.snapshot_ref("serve_bisect")?;
        Ok(sketch_of(self.field, self.capacity, snapshot, Some(IdRange::low_half(self.field.bits()))))
    }

    fn snapshot_ref(&self, op: &'static str) -> Result<&ShortMap<K>, ReconError> {
        self.snapshot.as_ref().ok_or(ReconError::OutOfPhase { op, phase: Phase::Idle })
    }

    /// Resolve requested short IDs against the served snapshot. The round
    /// ends unless some ID is unknown, in which case the snapshot is kept
    /// for the bisection or fallback that follows.
    pub fn serve_tx_request(&mut self, ids: &[ShortId]) -> Result<(Vec<K>, Vec<ShortId>), ReconError> {
        let snapshot = self.snapshot_ref("serve_tx_request")?;
        let mut found = Vec::new();
        let mut not_found = Vec::new();
        for &id in ids {
            match snapshot.get(&id) {
                Some(&k) => found.push(k),
                None => not_found.push(id),
            }
        }
        if not_found.is_empty() {
            self.snapshot = None;
        }
        Ok((found, not_found))
    }

    /// The key behind `id` in the round being served, if any.
    pub fn peek(&self, id: ShortId) -> Option<K> {
        self.snapshot.as_ref()?.get(&id).copied()
    }

    /// End the round in fallback mode, returning the full snapshot.
    pub fn serve_fallback(&mut self) -> Result<Vec<K>, ReconError> {
        let snapshot = self.snapshot.take().ok_or(ReconError::OutOfPhase { op: "serve_fallback", phase: Phase::Idle })?;
        Ok(sorted_keys(&snapshot))
    }
}
