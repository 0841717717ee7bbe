//! Byte accounting, the run ledger, and post-run analysis.

use std::io;

use erlay_core::recon::wire::{InvKind, Message};
use erlay_core::recon::RoundPath;
use erlay_core::Sketch;
use serde::{Deserialize, Serialize};

/// Message byte-size constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizeModel {
    pub header: u64,
    pub inv_item: u64,
    pub getdata_item: u64,
    pub tx_body: u64,
    /// Set size plus q in a reconciliation request.
    pub recon_request: u64,
    /// Set-size field carried next to a sketch.
    pub sketch_set_size: u64,
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel { header: 24, inv_item: 32, getdata_item: 24, tx_body: 244, recon_request: 12, sketch_set_size: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteClass {
    FloodInv,
    Recon,
    Bisection,
    Fallback,
    PostReconInv,
    GetData,
    TxBody,
}

impl ByteClass {
    pub const ALL: [ByteClass; 7] = [
        ByteClass::FloodInv,
        ByteClass::Recon,
        ByteClass::Bisection,
        ByteClass::Fallback,
        ByteClass::PostReconInv,
        ByteClass::GetData,
        ByteClass::TxBody,
    ];

    /// Classes that carry announcements rather than transaction data.
    pub const ANNOUNCEMENT: [ByteClass; 5] =
        [ByteClass::FloodInv, ByteClass::Recon, ByteClass::Bisection, ByteClass::Fallback, ByteClass::PostReconInv];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ByteClass::FloodInv => "flood_inv",
            ByteClass::Recon => "recon",
            ByteClass::Bisection => "bisection",
            ByteClass::Fallback => "fallback",
            ByteClass::PostReconInv => "post_recon_inv",
            ByteClass::GetData => "getdata",
            ByteClass::TxBody => "tx_body",
        }
    }
}

/// Bytes of one message split by class. Most messages fall in one class;
/// a short-ID transaction response carries bodies plus reconciliation
/// overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Charge {
    pub parts: [(ByteClass, u64); 2],
}

impl Charge {
    fn one(class: ByteClass, bytes: u64) -> Charge {
        Charge { parts: [(class, bytes), (class, 0)] }
    }

    pub fn total(&self) -> u64 {
        self.parts[0].1 + self.parts[1].1
    }
}

impl SizeModel {
    fn sketch_bytes(sketch: &Sketch) -> u64 {
        Sketch::serialized_len(sketch.bits(), sketch.capacity()) as u64
    }

    pub fn charge<K>(&self, msg: &Message<K>, short_id_bits: u32) -> Charge {
        let h = self.header;
        let short_item = short_id_bits.div_ceil(8) as u64;
        match msg {
            Message::Inv { items, kind } => {
                let class = match kind {
                    InvKind::Flood => ByteClass::FloodInv,
                    InvKind::PostRecon => ByteClass::PostReconInv,
                    InvKind::Fallback | InvKind::Evicted => ByteClass::Fallback,
                };
                Charge::one(class, h + self.inv_item * items.len() as u64)
            }
            Message::GetData { items } => Charge::one(ByteClass::GetData, h + self.getdata_item * items.len() as u64),
            Message::Tx { items } => Charge::one(ByteClass::TxBody, h + self.tx_body * items.len() as u64),
            Message::ReconRequest(_) => Charge::one(ByteClass::Recon, h + self.recon_request),
            Message::ReconSketch(r) => {
                Charge::one(ByteClass::Recon, h + self.sketch_set_size + Self::sketch_bytes(&r.sketch))
            }
            Message::BisectRequest => Charge::one(ByteClass::Bisection, h),
            Message::BisectResponse { sketch } => Charge::one(ByteClass::Bisection, h + Self::sketch_bytes(sketch)),
            Message::ShortIdTxRequest { ids, fallback } => {
                let class = if *fallback { ByteClass::Fallback } else { ByteClass::Recon };
                Charge::one(class, h + short_item * ids.len() as u64)
            }
            Message::TxResponse { items, not_found } => Charge {
                parts: [
                    (ByteClass::TxBody, self.tx_body * items.len() as u64),
                    (ByteClass::Recon, h + short_item * not_found.len() as u64),
                ],
            },
        }
    }
}

/// Closed-form per-node flooding announcement cost over `seconds`, as a
/// `(low, high)` band: every link carries each announcement once or twice.
pub fn analytic_flood_cost(connectivity: usize, tx_rate: f64, seconds: f64, inv_item: u64) -> (f64, f64) {
    let once = connectivity as f64 * tx_rate * inv_item as f64 * seconds;
    (once, 2.0 * once)
}

pub const SECONDS_PER_MONTH: f64 = 30.0 * 24.0 * 3600.0;

/// Reach times are kept at fractions k/100 of the reachable nodes.
pub const REACH_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpyKind {
    Public,
    Private,
}

impl SpyKind {
    pub fn name(self) -> &'static str {
        match self {
            SpyKind::Public => "public",
            SpyKind::Private => "private",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpyGroup {
    pub kind: SpyKind,
    pub fraction: f64,
    pub members: Vec<u32>,
}

/// First time a spy heard of a transaction, and from whom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpyRecord {
    pub spy: u32,
    pub tx: u32,
    pub time: f64,
    pub from: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxRecord {
    pub origin: u32,
    pub origin_time: f64,
    pub reached: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub size_a: u32,
    pub size_b: u32,
    pub d: u32,
    pub true_diff: u32,
    pub path: Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Path {
    Direct,
    Bisect,
    Fallback,
}

impl From<RoundPath> for Path {
    fn from(p: RoundPath) -> Path {
        match p {
            RoundPath::Direct => Path::Direct,
            RoundPath::Bisect => Path::Bisect,
            RoundPath::Fallback => Path::Fallback,
        }
    }
}

impl Path {
    pub fn name(self) -> &'static str {
        match self {
            Path::Direct => "direct",
            Path::Bisect => "bisect",
            Path::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRates {
    pub rounds: usize,
    pub direct: f64,
    pub bisect: f64,
    pub fallback: f64,
    pub est_correct: f64,
    pub mean_diff: f64,
}

/// Everything a run measures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ledger {
    pub protocol: String,
    pub connectivity: usize,
    pub n_nodes: usize,
    pub n_reachable: usize,
    pub sizes: SizeModel,
    pub sent: [u64; 7],
    pub received_bytes: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
    /// Announced items of every INV kind.
    pub inv_items: u64,
    pub getdata_items: u64,
    /// Flood INV items per transaction.
    pub flood_items_per_tx: Vec<u32>,
    pub txs: Vec<TxRecord>,
    /// `REACH_STEPS` times per transaction, seconds after origin; NaN
    /// where the fraction was never reached.
    pub reach: Vec<f32>,
    pub spy_groups: Vec<SpyGroup>,
    pub spy_log: Vec<SpyRecord>,
    pub rounds: Vec<RoundRow>,
    /// Rounds still in flight when the run ended (peer never answered).
    pub stuck_rounds: u64,
    pub protocol_errors: u64,
    /// q of every initiator session at the end of the run.
    pub final_q: Vec<f32>,
    pub topology_retries: u32,
    pub events: u64,
    pub end_time: f64,
    pub horizon_hit: bool,
    /// Transaction bodies delivered to a node that already had them.
    pub duplicate_txs: u64,
}

impl Ledger {
    pub fn bytes(&self, class: ByteClass) -> u64 {
        self.sent[class.index()]
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.iter().sum()
    }

    pub fn announcement_bytes(&self) -> u64 {
        ByteClass::ANNOUNCEMENT.iter().map(|&c| self.bytes(c)).sum()
    }

    /// Announcement bytes sent per node over the whole run.
    pub fn announcement_bytes_per_node(&self) -> f64 {
        self.announcement_bytes() as f64 / self.n_nodes as f64
    }

    pub fn announcement_share(&self) -> f64 {
        self.announcement_bytes() as f64 / self.total_sent() as f64
    }

    /// Share of `class` within announcement bytes.
    pub fn class_share(&self, class: ByteClass) -> f64 {
        self.bytes(class) as f64 / self.announcement_bytes() as f64
    }

    /// Sent announcements not followed by a request, over all sent
    /// announcements.
    pub fn redundancy(&self) -> f64 {
        if self.inv_items == 0 {
            return 0.0;
        }
        1.0 - self.getdata_items as f64 / self.inv_items as f64
    }

    pub fn coverage_shortfall(&self) -> u64 {
        self.txs.iter().map(|t| (self.n_reachable as u64).saturating_sub(t.reached as u64)).sum()
    }

    pub fn fully_covered(&self) -> bool {
        self.coverage_shortfall() == 0
    }

    /// Mean over transactions of the time to reach `ceil(f * N)` reachable
    /// nodes. `f` is rounded up to the recorded k/100 grid. Transactions
    /// that never got that far are left out.
    pub fn reach_latency(&self, fraction: f64) -> Option<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) || self.txs.is_empty() {
            return None;
        }
        let step = ((fraction * REACH_STEPS as f64 - 1e-9).ceil() as usize).clamp(1, REACH_STEPS) - 1;
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.txs.len() {
            let t = self.reach[i * REACH_STEPS + step];
            if !t.is_nan() {
                sum += t as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Fraction of transactions whose originator is the peer that first
    /// announced them to any spy of the group. Simultaneous first sightings
    /// from different peers count as failures.
    pub fn first_spy_success(&self, kind: SpyKind) -> Option<f64> {
        let group = self.spy_groups.iter().find(|g| g.kind == kind && !g.members.is_empty())?;
        if self.txs.is_empty() {
            return None;
        }
        let mut members = vec![false; self.n_nodes];
        for &m in &group.members {
            members[m as usize] = true;
        }
        // (time, announcer, tie)
        let mut first: Vec<Option<(f64, u32, bool)>> = vec![None; self.txs.len()];
        for r in self.spy_log.iter().filter(|r| members[r.spy as usize]) {
            let slot = &mut first[r.tx as usize];
            match slot {
                None => *slot = Some((r.time, r.from, false)),
                Some((t, from, tie)) => {
                    if r.time < *t {
                        *slot = Some((r.time, r.from, false));
                    } else if r.time == *t && r.from != *from {
                        *tie = true;
                    }
                }
            }
        }
        let hits = first
            .iter()
            .zip(&self.txs)
            .filter(|(f, tx)| matches!(f, Some((_, from, false)) if *from == tx.origin))
            .count();
        Some(hits as f64 / self.txs.len() as f64)
    }

    pub fn round_rates(&self) -> Option<RoundRates> {
        let n = self.rounds.len();
        if n == 0 {
            return None;
        }
        let count = |p: Path| self.rounds.iter().filter(|r| r.path == p).count() as f64 / n as f64;
        Some(RoundRates {
            rounds: n,
            direct: count(Path::Direct),
            bisect: count(Path::Bisect),
            fallback: count(Path::Fallback),
            est_correct: self.rounds.iter().filter(|r| r.true_diff <= r.d).count() as f64 / n as f64,
            mean_diff: self.rounds.iter().map(|r| r.true_diff as f64).sum::<f64>() / n as f64,
        })
    }
}

/// The CSV files written for a set of runs.
pub struct CsvSet<W: io::Write> {
    pub bandwidth: csv::Writer<W>,
    pub latency: csv::Writer<W>,
    pub rounds: csv::Writer<W>,
    pub spies: csv::Writer<W>,
}

/// Fractions written to `latency.csv`.
pub const LATENCY_FRACTIONS: [f64; 12] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0];

impl<W: io::Write> CsvSet<W> {
    pub fn new(bandwidth: W, latency: W, rounds: W, spies: W) -> csv::Result<Self> {
        let mut set = CsvSet {
            bandwidth: csv::Writer::from_writer(bandwidth),
            latency: csv::Writer::from_writer(latency),
            rounds: csv::Writer::from_writer(rounds),
            spies: csv::Writer::from_writer(spies),
        };
        set.bandwidth.write_record(["run_id", "protocol", "connectivity", "class", "bytes"])?;
        set.latency.write_record(["run_id", "protocol", "fraction", "seconds"])?;
        set.rounds.write_record(["run_id", "size_a", "size_b", "d", "D", "outcome"])?;
        set.spies.write_record(["run_id", "spy_kind", "spy_fraction", "success_rate"])?;
        Ok(set)
    }

    pub fn write(&mut self, run_id: &str, ledger: &Ledger) -> csv::Result<()> {
        let conn = ledger.connectivity.to_string();
        for class in ByteClass::ALL {
            self.bandwidth.write_record([
                run_id,
                &ledger.protocol,
                &conn,
                class.name(),
                &ledger.bytes(class).to_string(),
            ])?;
        }
        for f in LATENCY_FRACTIONS {
            if let Some(s) = ledger.reach_latency(f) {
                self.latency.write_record([run_id, &ledger.protocol, &format!("{f}"), &format!("{s:.6}")])?;
            }
        }
        for r in &ledger.rounds {
            self.rounds.write_record([
                run_id,
                &r.size_a.to_string(),
                &r.size_b.to_string(),
                &r.d.to_string(),
                &r.true_diff.to_string(),
                r.path.name(),
            ])?;
        }
        for g in &ledger.spy_groups {
            if let Some(rate) = ledger.first_spy_success(g.kind) {
                self.spies.write_record([run_id, g.kind.name(), &format!("{}", g.fraction), &format!("{rate:.6}")])?;
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.bandwidth.flush()?;
        self.latency.flush()?;
        self.rounds.flush()?;
        self.spies.flush()
    }

    pub fn into_inner(self) -> Result<[W; 4], csv::Error> {
        let unwrap = |w: csv::Writer<W>| w.into_inner().map_err(|e| csv::Error::from(e.into_error()));
        Ok([unwrap(self.bandwidth)?, unwrap(self.latency)?, unwrap(self.rounds)?, unwrap(self.spies)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use erlay_core::recon::wire::ReconSketchResponse;
    use erlay_core::recon::ShortId;

    #[test]
    fn relay_of_one_transaction_costs_300_payload_bytes() {
        let m = SizeModel::default();
        assert_eq!(m.inv_item + m.getdata_item + m.tx_body, 300);
        let inv = m.charge(&Message::Inv { items: vec![1u32], kind: InvKind::Flood }, 64);
        let get = m.charge(&Message::GetData { items: vec![1u32] }, 64);
        let tx = m.charge(&Message::Tx { items: vec![1u32] }, 64);
        assert_eq!(inv.total() + get.total() + tx.total(), 300 + 3 * m.header);
    }

    #[test]
    fn message_charges() {
        let m = SizeModel::default();
        let sketch = Sketch::new(64, 7).unwrap();
        let c = m.charge::<u32>(&Message::ReconSketch(ReconSketchResponse { sketch: sketch.clone(), set_size: 3 }), 64);
        assert_eq!(c.parts[0], (ByteClass::Recon, 24 + 4 + 56));
        let c = m.charge::<u32>(&Message::BisectResponse { sketch }, 64);
        assert_eq!(c.total(), 24 + 56);
        let c = m.charge::<u32>(&Message::ShortIdTxRequest { ids: vec![ShortId::from_raw(5); 3], fallback: false }, 64);
        assert_eq!(c.parts[0], (ByteClass::Recon, 24 + 24));
        let c = m.charge::<u32>(&Message::ShortIdTxRequest { ids: vec![], fallback: true }, 64);
        assert_eq!(c.parts[0], (ByteClass::Fallback, 24));
        let c = m.charge(&Message::TxResponse { items: vec![1u32, 2], not_found: vec![ShortId::from_raw(9)] }, 64);
        assert_eq!(c.parts, [(ByteClass::TxBody, 488), (ByteClass::Recon, 32)]);
        // Fallback over two empty sets: two empty INV lists, headers only.
        let c = m.charge::<u32>(&Message::Inv { items: vec![], kind: InvKind::Fallback }, 64);
        assert_eq!(c.parts[0], (ByteClass::Fallback, 24));
        // Fallback announcements cost 32 bytes an item on top of headers.
        let c = m.charge(&Message::Inv { items: vec![7u32; 10], kind: InvKind::Fallback }, 64);
        assert_eq!(c.total(), 24 + 320);
    }

    #[test]
    fn analytic_band_examples() {
        let gb = 1e9;
        let (lo, hi) = analytic_flood_cost(8, 7.0, SECONDS_PER_MONTH, 32);
        assert!(lo <= 9.0 * gb && 9.0 * gb <= hi, "{lo} {hi}");
        let (lo24, hi24) = analytic_flood_cost(24, 7.0, SECONDS_PER_MONTH, 32);
        assert!(lo24 <= 15.0 * gb && 15.0 * gb < hi24, "{lo24} {hi24}");
        assert!((lo24 / lo - 3.0).abs() < 1e-12);
        // 8 * 7 * 32 * 2_592_000 bytes.
        assert_eq!(lo, 4_644_864_000.0);
    }

    fn ledger_with_reach(times: &[[f32; 3]]) -> Ledger {
        let mut l = Ledger { n_nodes: 10, n_reachable: 10, ..Ledger::default() };
        for t in times {
            l.txs.push(TxRecord { origin: 0, origin_time: 0.0, reached: 10 });
            let mut row = vec![f32::NAN; REACH_STEPS];
            for k in 0..REACH_STEPS {
                row[k] = if k < 50 { t[0] } else if k < 99 { t[1] } else { t[2] };
            }
            l.reach.extend(row);
        }
        l
    }

    #[test]
    fn reach_latency_means_and_grid() {
        let l = ledger_with_reach(&[[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]]);
        assert_eq!(l.reach_latency(0.5), Some(2.0));
        assert_eq!(l.reach_latency(0.9), Some(3.0));
        assert_eq!(l.reach_latency(1.0), Some(4.0));
        assert_eq!(l.reach_latency(0.0), None);
        assert_eq!(Ledger::default().reach_latency(1.0), None);
    }

    #[test]
    fn spy_estimator_and_ties() {
        let mut l = Ledger { n_nodes: 6, ..Ledger::default() };
        l.txs = vec![
            TxRecord { origin: 1, origin_time: 0.0, reached: 6 },
            TxRecord { origin: 2, origin_time: 0.0, reached: 6 },
            TxRecord { origin: 3, origin_time: 0.0, reached: 6 },
        ];
        l.spy_groups = vec![SpyGroup { kind: SpyKind::Public, fraction: 0.3, members: vec![4, 5] }];
        l.spy_log = vec![
            SpyRecord { spy: 4, tx: 0, time: 1.0, from: 1 },
            SpyRecord { spy: 5, tx: 0, time: 2.0, from: 3 },
            SpyRecord { spy: 4, tx: 1, time: 1.0, from: 2 },
            SpyRecord { spy: 5, tx: 1, time: 1.0, from: 0 },
            SpyRecord { spy: 5, tx: 2, time: 0.5, from: 0 },
            SpyRecord { spy: 4, tx: 2, time: 0.7, from: 3 },
        ];
        assert_eq!(l.first_spy_success(SpyKind::Public), Some(1.0 / 3.0));
        assert_eq!(l.first_spy_success(SpyKind::Private), None);
    }

    #[test]
    fn redundancy_and_rates() {
        let l = Ledger { inv_items: 80, getdata_items: 10, ..Ledger::default() };
        assert!((l.redundancy() - 0.875).abs() < 1e-12);
        let mut l = Ledger::default();
        assert!(l.round_rates().is_none());
        for (d, dd, path) in [(3, 2, Path::Direct), (3, 5, Path::Bisect), (1, 4, Path::Fallback), (2, 2, Path::Direct)] {
            l.rounds.push(RoundRow { size_a: 5, size_b: 5, d, true_diff: dd, path });
        }
        let r = l.round_rates().unwrap();
        assert_eq!((r.direct, r.bisect, r.fallback, r.est_correct), (0.5, 0.25, 0.25, 0.5));
        assert!((r.direct + r.bisect + r.fallback - 1.0).abs() < 1e-12);
        assert_eq!(r.mean_diff, 13.0 / 4.0);
    }

    #[test]
    fn csv_headers_and_round_rows() {
        let mut l = Ledger { protocol: "Erlay".into(), connectivity: 8, ..Ledger::default() };
        let empty = {
            let mut set = CsvSet::new(Vec::new(), Vec::new(), Vec::new(), Vec::new()).unwrap();
            set.flush().unwrap();
            set.into_inner().unwrap()
        };
        assert_eq!(String::from_utf8(empty[2].clone()).unwrap(), "run_id,size_a,size_b,d,D,outcome\n");
        l.rounds.push(RoundRow { size_a: 4, size_b: 6, d: 3, true_diff: 2, path: Path::Direct });
        let mut set = CsvSet::new(Vec::new(), Vec::new(), Vec::new(), Vec::new()).unwrap();
        set.write("r1", &l).unwrap();
        let out = set.into_inner().unwrap();
        let rounds = String::from_utf8(out[2].clone()).unwrap();
        assert_eq!(rounds.lines().count(), 1 + l.rounds.len());
        assert!(rounds.ends_with("r1,4,6,3,2,direct\n"));
        let bw = String::from_utf8(out[0].clone()).unwrap();
        assert_eq!(bw.lines().count(), 1 + 7);
        assert!(bw.contains("r1,Erlay,8,post_recon_inv,0"));
    }
}
