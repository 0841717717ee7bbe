//! The discrete-event relay simulation.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use erlay_core::recon::wire::{InvKind, Message, ReconRequest};
use erlay_core::recon::{
    short_id, BisectResult, Confirm, FinishResult, Insert, LinkSalt, ReconParams, ReconResponder, ReconSession,
    RoundOutcome, RoundRecord, TxId,
};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::{ConfigError, Protocol, SimConfig};
use crate::metrics::{Ledger, RoundRow, SpyGroup, SpyKind, SpyRecord, TxRecord, REACH_STEPS};
use crate::seeds::{rng_for, tx_id, Stream};
use crate::topology::build_topology;

/// What an [`Observer`] sees of each sent message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendInfo {
    pub time: f64,
    pub from: u32,
    pub to: u32,
    pub from_public: bool,
    /// Whether `from` initiated the connection the message travels on.
    pub outbound: bool,
    /// Arrival is `time + latency`.
    pub latency: f64,
}

pub trait Observer {
    fn on_send(&mut self, info: &SendInfo, msg: &Message<u32>);
}

impl<F: FnMut(&SendInfo, &Message<u32>)> Observer for F {
    fn on_send(&mut self, info: &SendInfo, msg: &Message<u32>) {
        self(info, msg)
    }
}

struct Quiet;

impl Observer for Quiet {
    fn on_send(&mut self, _: &SendInfo, _: &Message<u32>) {}
}

pub fn run(config: &SimConfig) -> Result<Ledger, ConfigError> {
    run_observed(config, &mut Quiet)
}

pub fn run_observed<O: Observer>(config: &SimConfig, observer: &mut O) -> Result<Ledger, ConfigError> {
    config.validate()?;
    let mut sim = Sim::new(config, observer)?;
    sim.run();
    Ok(sim.finish())
}

const UNKNOWN: u8 = 0;
const REQUESTED: u8 = 1;
const KNOWN: u8 = 2;
const STATE_MASK: u8 = 3;
const SPY_SEEN: u8 = 4;

enum Side {
    Flood,
    Initiator(Box<ReconSession<u32>>),
    Responder(Box<ReconResponder<u32>>),
}

/// One direction of a connection.
struct Channel {
    from: u32,
    to: u32,
    reverse: u32,
    latency: f64,
    outbound: bool,
    flood: bool,
    /// Index into the diffusion delay distributions.
    delay: usize,
    queue: Vec<u32>,
    timer: bool,
    salt: LinkSalt,
    side: Side,
    last_served: f64,
}

struct Node {
    public: bool,
    black_hole: bool,
    spy: bool,
    /// Outbound channels first, in connection order, then inbound.
    channels: Vec<u32>,
    n_outbound: usize,
    rotation: usize,
    pending: Vec<(u32, ReconRequest)>,
    serve_timer: bool,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Originate(u32),
    Deliver(u32),
    Flush(u32),
    ReconTick(u32),
    Serve(u32),
}

struct Event {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct InFlight {
    channel: u32,
    bytes: u64,
    msg: Message<u32>,
}

struct Sim<'a, O> {
    cfg: &'a SimConfig,
    observer: &'a mut O,
    bits: u32,
    nodes: Vec<Node>,
    channels: Vec<Channel>,
    txids: Vec<TxId>,
    tx_origin: Vec<u32>,
    tx_time: Vec<f64>,
    ntx: usize,
    state: Vec<u8>,
    announcers: HashMap<u64, Vec<u32>>,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    slab: Vec<Option<InFlight>>,
    free: Vec<u32>,
    timers: ChaCha8Rng,
    delays: [Exp<f64>; 2],
    serve_delay: Exp<f64>,
    thresholds: Vec<u32>,
    next_step: Vec<u8>,
    covered: usize,
    originated: usize,
    quiescing: bool,
    ledger: Ledger,
}

fn exp(mean: f64) -> Exp<f64> {
    Exp::new(1.0 / mean).expect("validated positive mean")
}

fn pick(rng: &mut ChaCha8Rng, pool: &[u32], fraction: f64) -> Vec<u32> {
    let count = ((fraction * pool.len() as f64).round() as usize).min(pool.len());
    let mut chosen: Vec<u32> = index::sample(rng, pool.len(), count).iter().map(|i| pool[i]).collect();
    chosen.sort_unstable();
    chosen
}

impl<'a, O: Observer> Sim<'a, O> {
    fn new(cfg: &'a SimConfig, observer: &'a mut O) -> Result<Self, ConfigError> {
        let topo = build_topology(cfg)?;
        let n = topo.n_nodes();
        let params: ReconParams = cfg.recon.into();

        let mut nodes: Vec<Node> = (0..n)
            .map(|i| Node {
                public: i < topo.n_public,
                black_hole: false,
                spy: false,
                channels: Vec::new(),
                n_outbound: 0,
                rotation: 0,
                pending: Vec::new(),
                serve_timer: false,
            })
            .collect();

        let mut roles = rng_for(cfg.seed, Stream::Roles, 0);
        let publics: Vec<u32> = (0..topo.n_public as u32).collect();
        let black_holes = pick(&mut roles, &publics, cfg.black_hole_fraction);
        for &b in &black_holes {
            nodes[b as usize].black_hole = true;
        }
        let honest_public: Vec<u32> = publics.iter().copied().filter(|&p| !nodes[p as usize].black_hole).collect();
        let privates: Vec<u32> = (topo.n_public as u32..n as u32).collect();
        let mut spy_groups = Vec::new();
        for (kind, pool, fraction) in [
            (SpyKind::Public, &honest_public, cfg.spies.public_fraction),
            (SpyKind::Private, &privates, cfg.spies.private_fraction),
        ] {
            // Fractions are of the whole public / private population.
            let total = if kind == SpyKind::Public { topo.n_public } else { topo.n_private };
            let scaled = if pool.is_empty() { 0.0 } else { fraction * total as f64 / pool.len() as f64 };
            let members = pick(&mut roles, pool, scaled.min(1.0));
            if fraction > 0.0 {
                for &m in &members {
                    nodes[m as usize].spy = true;
                }
                spy_groups.push(SpyGroup { kind, fraction, members });
            }
        }

        let mut latency_rng = rng_for(cfg.seed, Stream::Latency, 0);
        let mut salt_rng = rng_for(cfg.seed, Stream::Salts, 0);
        let mut channels = Vec::with_capacity(topo.connections.len() * 2);
        let mut inbound: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (k, &(u, v)) in topo.connections.iter().enumerate() {
            let (lo, hi) = (cfg.latency.min_s, cfg.latency.max_s);
            let latency = if hi > lo { latency_rng.gen_range(lo..hi) } else { lo };
            let salt = LinkSalt(salt_rng.gen());
            let (a, b) = (2 * k as u32, 2 * k as u32 + 1);
            let (init, resp) = if cfg.protocol.reconciles() {
                (
                    Side::Initiator(Box::new(ReconSession::new(params).map_err(|e| ConfigError::Other { reason: e.to_string() })?)),
                    Side::Responder(Box::new(ReconResponder::new(params).map_err(|e| ConfigError::Other { reason: e.to_string() })?)),
                )
            } else {
                (Side::Flood, Side::Flood)
            };
            for (from, to, reverse, outbound, side) in [(u, v, b, true, init), (v, u, a, false, resp)] {
                channels.push(Channel {
                    from,
                    to,
                    reverse,
                    latency,
                    outbound,
                    flood: false,
                    delay: if outbound { 0 } else { 1 },
                    queue: Vec::new(),
                    timer: false,
                    salt,
                    side,
                    last_served: f64::NEG_INFINITY,
                });
            }
            nodes[u as usize].channels.push(a);
            nodes[u as usize].n_outbound += 1;
            inbound[v as usize].push(b);
        }
        for (node, inb) in nodes.iter_mut().zip(inbound) {
            node.channels.extend(inb);
        }
        for node in &nodes {
            let (flood_out, flood_in) = match cfg.protocol {
                Protocol::BtcFlood => (usize::MAX, usize::MAX),
                Protocol::Erlay if node.public => (cfg.erlay_flood_outbound, 0),
                Protocol::Sweep { flood_inbound, flood_outbound } if node.public => (flood_outbound, flood_inbound),
                _ => (0, 0),
            };
            for (i, &ch) in node.channels.iter().enumerate() {
                let flood = if i < node.n_outbound { i < flood_out } else { i - node.n_outbound < flood_in };
                channels[ch as usize].flood = flood;
            }
        }

        // Poisson arrivals from random honest private nodes.
        let origins: Vec<u32> = privates.iter().copied().filter(|&p| !nodes[p as usize].spy).collect();
        let mut sched = rng_for(cfg.seed, Stream::Schedule, 0);
        let gap = exp(1.0 / cfg.tx_rate);
        let mut tx_time = Vec::new();
        let mut tx_origin = Vec::new();
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut sched);
            if t > cfg.duration_s || cfg.tx_limit.is_some_and(|l| tx_time.len() >= l) {
                break;
            }
            tx_time.push(t);
            tx_origin.push(origins[sched.gen_range(0..origins.len())]);
        }
        let ntx = tx_time.len();
        let txids = (0..ntx as u64).map(|i| tx_id(cfg.seed, i)).collect();

        let n_reachable = nodes.iter().filter(|n| !n.black_hole).count();
        let thresholds = (1..=REACH_STEPS as u64)
            .map(|k| (k * n_reachable as u64).div_ceil(REACH_STEPS as u64) as u32)
            .collect();
        let (t_oi, t_ii) = cfg.diffusion();

        let ledger = Ledger {
            protocol: cfg.protocol.name(),
            connectivity: cfg.connectivity,
            n_nodes: n,
            n_reachable,
            sizes: cfg.sizes,
            flood_items_per_tx: vec![0; ntx],
            txs: tx_origin
                .iter()
                .zip(&tx_time)
                .map(|(&origin, &origin_time)| TxRecord { origin, origin_time, reached: 0 })
                .collect(),
            reach: vec![f32::NAN; ntx * REACH_STEPS],
            spy_groups,
            topology_retries: topo.retries,
            ..Ledger::default()
        };

        let mut sim = Sim {
            cfg,
            observer,
            bits: params.bits,
            nodes,
            channels,
            txids,
            tx_origin,
            tx_time,
            ntx,
            state: vec![UNKNOWN; n * ntx],
            announcers: HashMap::new(),
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            slab: Vec::new(),
            free: Vec::new(),
            timers: rng_for(cfg.seed, Stream::Timers, 0),
            delays: [exp(t_oi), exp(t_ii)],
            serve_delay: exp(cfg.t_ri),
            thresholds,
            next_step: vec![0; ntx],
            covered: 0,
            originated: 0,
            quiescing: ntx == 0,
            ledger,
        };
        for tx in 0..ntx {
            sim.schedule(sim.tx_time[tx], Ev::Originate(tx as u32));
        }
        if cfg.protocol.reconciles() && !sim.quiescing {
            for v in 0..n {
                if !sim.nodes[v].black_hole && sim.nodes[v].n_outbound > 0 {
                    let offset = sim.timers.gen_range(0.0..cfg.t_recon);
                    sim.schedule(offset, Ev::ReconTick(v as u32));
                }
            }
        }
        Ok(sim)
    }

    fn schedule(&mut self, time: f64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Event { time, seq: self.seq, ev });
    }

    fn run(&mut self) {
        let horizon = self.cfg.duration_s + self.cfg.horizon_s;
        while let Some(event) = self.heap.pop() {
            self.now = event.time;
            self.ledger.events += 1;
            if !self.quiescing && self.now > horizon {
                self.quiescing = true;
                self.ledger.horizon_hit = true;
            }
            match event.ev {
                Ev::Originate(tx) => self.originate(tx),
                Ev::Deliver(slot) => self.deliver(slot),
                Ev::Flush(ch) => self.flush(ch),
                Ev::ReconTick(v) => self.recon_tick(v),
                Ev::Serve(v) => self.serve(v),
            }
            if !self.quiescing && self.originated == self.ntx && self.covered == self.ntx {
                self.quiescing = true;
            }
        }
    }

    fn finish(mut self) -> Ledger {
        self.ledger.end_time = self.now;
        for ch in &self.channels {
            if let Side::Initiator(s) = &ch.side {
                self.ledger.final_q.push(s.q() as f32);
                self.ledger.stuck_rounds += s.in_flight() as u64;
            }
        }
        self.ledger
    }

    fn key(&self, node: u32, tx: u32) -> usize {
        node as usize * self.ntx + tx as usize
    }

    fn send(&mut self, ch: u32, msg: Message<u32>) {
        let channel = &self.channels[ch as usize];
        let info = SendInfo {
            time: self.now,
            from: channel.from,
            to: channel.to,
            from_public: self.nodes[channel.from as usize].public,
            outbound: channel.outbound,
            latency: channel.latency,
        };
        debug_assert!(!self.nodes[channel.from as usize].black_hole);
        let latency = channel.latency;
        let charge = self.cfg.sizes.charge(&msg, self.bits);
        for (class, bytes) in charge.parts {
            self.ledger.sent[class.index()] += bytes;
        }
        self.ledger.messages_sent += 1;
        match &msg {
            Message::Inv { items, kind } => {
                self.ledger.inv_items += items.len() as u64;
                if *kind == InvKind::Flood {
                    for &t in items {
                        self.ledger.flood_items_per_tx[t as usize] += 1;
                    }
                }
            }
            Message::GetData { items } => self.ledger.getdata_items += items.len() as u64,
            _ => {}
        }
        self.observer.on_send(&info, &msg);
        let entry = InFlight { channel: ch, bytes: charge.total(), msg };
        let slot = match self.free.pop() {
            Some(s) => {
                self.slab[s as usize] = Some(entry);
                s
            }
            None => {
                self.slab.push(Some(entry));
                (self.slab.len() - 1) as u32
            }
        };
        self.schedule(self.now + latency, Ev::Deliver(slot));
    }

    fn originate(&mut self, tx: u32) {
        self.originated += 1;
        let origin = self.tx_origin[tx as usize];
        let k = self.key(origin, tx);
        self.state[k] = (self.state[k] & !STATE_MASK) | KNOWN;
        self.mark_reached(origin, tx);
        self.relay(origin, tx, None, &[]);
    }

    fn mark_reached(&mut self, node: u32, tx: u32) {
        if self.nodes[node as usize].black_hole {
            return;
        }
        let t = tx as usize;
        let record = &mut self.ledger.txs[t];
        record.reached += 1;
        let reached = record.reached;
        let elapsed = (self.now - self.tx_time[t]) as f32;
        while (self.next_step[t] as usize) < REACH_STEPS && self.thresholds[self.next_step[t] as usize] <= reached {
            self.ledger.reach[t * REACH_STEPS + self.next_step[t] as usize] = elapsed;
            self.next_step[t] += 1;
        }
        if reached as usize == self.ledger.n_reachable {
            self.covered += 1;
        }
    }

    fn expose(&mut self, node: u32, tx: u32, from: u32) {
        if !self.nodes[node as usize].spy {
            return;
        }
        let k = self.key(node, tx);
        if self.state[k] & SPY_SEEN == 0 {
            self.state[k] |= SPY_SEEN;
            self.ledger.spy_log.push(SpyRecord { spy: node, tx, time: self.now, from });
        }
    }

    /// Queue a newly learned transaction towards every peer except its
    /// source and peers known to have it.
    fn relay(&mut self, node: u32, tx: u32, source: Option<u32>, skip: &[u32]) {
        for i in 0..self.nodes[node as usize].channels.len() {
            let ch = self.nodes[node as usize].channels[i];
            let to = self.channels[ch as usize].to;
            if source == Some(to) || skip.contains(&to) {
                continue;
            }
            if self.channels[ch as usize].flood {
                self.enqueue_flood(ch, tx);
            } else {
                self.add_to_recon(ch, tx);
            }
        }
    }

    fn enqueue_flood(&mut self, ch: u32, tx: u32) {
        let channel = &mut self.channels[ch as usize];
        channel.queue.push(tx);
        if !channel.timer {
            channel.timer = true;
            let delay = self.delays[channel.delay].sample(&mut self.timers);
            self.schedule(self.now + delay, Ev::Flush(ch));
        }
    }

    fn add_to_recon(&mut self, ch: u32, tx: u32) {
        let short = short_id(&self.txids[tx as usize], self.channels[ch as usize].salt, self.bits);
        let inserted = match &mut self.channels[ch as usize].side {
            Side::Initiator(s) => s.set_mut().insert(short, tx),
            Side::Responder(r) => r.set_mut().insert(short, tx),
            Side::Flood => return,
        };
        if let Insert::Collision(k) = inserted {
            self.send(ch, Message::Inv { items: vec![k], kind: InvKind::Evicted });
        }
    }

    /// The peer on `ch` is known to have `tx`: drop any pending
    /// announcement of it.
    fn forget(&mut self, ch: u32, tx: u32) {
        let channel = &mut self.channels[ch as usize];
        if let Some(pos) = channel.queue.iter().position(|&t| t == tx) {
            channel.queue.remove(pos);
        }
        let set = match &mut channel.side {
            Side::Initiator(s) => s.set_mut(),
            Side::Responder(r) => r.set_mut(),
            Side::Flood => return,
        };
        if !set.is_empty() {
            set.remove(short_id(&self.txids[tx as usize], channel.salt, self.bits), tx);
        }
    }

    fn flush(&mut self, ch: u32) {
        let channel = &mut self.channels[ch as usize];
        channel.timer = false;
        if channel.queue.is_empty() {
            return;
        }
        let items = std::mem::take(&mut channel.queue);
        self.send(ch, Message::Inv { items, kind: InvKind::Flood });
    }

    fn deliver(&mut self, slot: u32) {
        let InFlight { channel: ch, bytes, msg } = self.slab[slot as usize].take().expect("live slot");
        self.free.push(slot);
        self.ledger.received_bytes += bytes;
        self.ledger.messages_received += 1;
        let (from, to, reply) = {
            let c = &self.channels[ch as usize];
            (c.from, c.to, c.reverse)
        };
        if self.nodes[to as usize].black_hole {
            return;
        }
        match msg {
            Message::Inv { items, kind } => self.on_inv(to, from, reply, items, kind),
            Message::GetData { items } => self.send(reply, Message::Tx { items }),
            Message::Tx { items } => {
                for t in items {
                    self.receive_tx(to, t, from, reply);
                }
            }
            Message::ReconRequest(req) => {
                self.nodes[to as usize].pending.push((ch, req));
                self.arm_serve(to);
            }
            Message::ReconSketch(resp) => {
                let result = self.initiator(reply).finish_round(&resp);
                match result {
                    Ok(FinishResult::Done(out)) => self.on_outcome(reply, out),
                    Ok(FinishResult::BisectNeeded) => self.send(reply, Message::BisectRequest),
                    Err(_) => self.ledger.protocol_errors += 1,
                }
            }
            Message::BisectRequest => match self.responder(reply).serve_bisect() {
                Ok(sketch) => self.send(reply, Message::BisectResponse { sketch }),
                Err(_) => self.ledger.protocol_errors += 1,
            },
            Message::BisectResponse { sketch } => {
                let result = self.initiator(reply).bisect_round(&sketch);
                match result {
                    Ok(BisectResult::Done(out)) => self.on_outcome(reply, out),
                    Ok(BisectResult::FallbackNeeded) => self.start_fallback(reply),
                    Err(_) => self.ledger.protocol_errors += 1,
                }
            }
            Message::ShortIdTxRequest { ids, fallback } => {
                if fallback {
                    match self.responder(reply).serve_fallback() {
                        Ok(items) => self.send(reply, Message::Inv { items, kind: InvKind::Fallback }),
                        Err(_) => self.ledger.protocol_errors += 1,
                    }
                } else {
                    match self.responder(reply).serve_tx_request(&ids) {
                        Ok((items, not_found)) if !ids.is_empty() => {
                            self.send(reply, Message::TxResponse { items, not_found })
                        }
                        Ok(_) => {}
                        Err(_) => self.ledger.protocol_errors += 1,
                    }
                }
            }
            Message::TxResponse { items, not_found } => {
                for t in items {
                    self.receive_tx(to, t, from, reply);
                }
                let result = self.initiator(reply).confirm(&not_found);
                match result {
                    Ok(Confirm::Done(record)) => self.log_round(&record),
                    Ok(Confirm::BisectNeeded) => self.send(reply, Message::BisectRequest),
                    Ok(Confirm::FallbackNeeded) => self.start_fallback(reply),
                    Err(_) => self.ledger.protocol_errors += 1,
                }
            }
        }
    }

    fn initiator(&mut self, ch: u32) -> &mut ReconSession<u32> {
        match &mut self.channels[ch as usize].side {
            Side::Initiator(s) => s,
            _ => panic!("channel {ch} has no initiator session"),
        }
    }

    fn responder(&mut self, ch: u32) -> &mut ReconResponder<u32> {
        match &mut self.channels[ch as usize].side {
            Side::Responder(r) => r,
            _ => panic!("channel {ch} has no responder session"),
        }
    }

    fn on_inv(&mut self, node: u32, from: u32, reply: u32, items: Vec<u32>, kind: InvKind) {
        let mut wanted = Vec::new();
        for &t in &items {
            self.expose(node, t, from);
            let k = self.key(node, t);
            match self.state[k] & STATE_MASK {
                UNKNOWN => {
                    self.state[k] |= REQUESTED;
                    wanted.push(t);
                }
                REQUESTED => self.announcers.entry(k as u64).or_default().push(from),
                _ => self.forget(reply, t),
            }
        }
        if !wanted.is_empty() {
            self.send(reply, Message::GetData { items: wanted });
        }
        if kind == InvKind::Fallback {
            if let Side::Initiator(s) = &mut self.channels[reply as usize].side {
                if s.phase() == erlay_core::recon::Phase::Fallback {
                    match s.fallback_round(&items) {
                        Ok(out) => self.log_round(&out.record),
                        Err(_) => self.ledger.protocol_errors += 1,
                    }
                }
            }
        }
    }

    /// `reply` is our channel back to `from`.
    fn receive_tx(&mut self, node: u32, tx: u32, from: u32, reply: u32) {
        self.expose(node, tx, from);
        let k = self.key(node, tx);
        if self.state[k] & STATE_MASK == KNOWN {
            self.ledger.duplicate_txs += 1;
            self.forget(reply, tx);
            return;
        }
        self.state[k] = (self.state[k] & !STATE_MASK) | KNOWN;
        let skip = self.announcers.remove(&(k as u64)).unwrap_or_default();
        self.mark_reached(node, tx);
        self.relay(node, tx, Some(from), &skip);
    }

    fn on_outcome(&mut self, ch: u32, out: RoundOutcome<u32>) {
        let RoundOutcome { mut missing_local, missing_remote, record } = out;
        if !missing_remote.is_empty() {
            self.send(ch, Message::Inv { items: missing_remote, kind: InvKind::PostRecon });
        }
        // A node can hash its whole store with the link salt; we look the
        // ID up on the peer instead, which gives the same answer.
        let node = self.channels[ch as usize].from;
        let reverse = self.channels[ch as usize].reverse;
        let Side::Responder(peer) = &self.channels[reverse as usize].side else {
            panic!("channel {reverse} has no responder session");
        };
        let base = node as usize * self.ntx;
        let peer_node = self.channels[reverse as usize].from;
        let (state, announcers) = (&mut self.state, &mut self.announcers);
        // Fetch only what is neither known nor already on its way from
        // another peer, like the GETDATA path.
        missing_local.retain(|&id| {
            let Some(tx) = peer.peek(id) else { return true };
            let k = base + tx as usize;
            match state[k] & STATE_MASK {
                UNKNOWN => {
                    state[k] |= REQUESTED;
                    true
                }
                REQUESTED => {
                    announcers.entry(k as u64).or_default().push(peer_node);
                    false
                }
                _ => false,
            }
        });
        let nothing_to_fetch = missing_local.is_empty();
        // Sent even when empty: it releases the responder's snapshot.
        self.send(ch, Message::ShortIdTxRequest { ids: missing_local, fallback: false });
        match record {
            Some(record) => self.log_round(&record),
            None if nothing_to_fetch => match self.initiator(ch).confirm(&[]) {
                Ok(Confirm::Done(record)) => self.log_round(&record),
                _ => self.ledger.protocol_errors += 1,
            },
            None => {}
        }
    }

    fn start_fallback(&mut self, ch: u32) {
        match self.initiator(ch).fallback_announcements() {
            Ok(items) => {
                self.send(ch, Message::ShortIdTxRequest { ids: Vec::new(), fallback: true });
                self.send(ch, Message::Inv { items, kind: InvKind::Fallback });
            }
            Err(_) => self.ledger.protocol_errors += 1,
        }
    }

    fn log_round(&mut self, r: &RoundRecord) {
        self.ledger.rounds.push(RoundRow {
            size_a: r.size_local as u32,
            size_b: r.size_remote as u32,
            d: r.estimate as u32,
            true_diff: r.true_diff as u32,
            path: r.path.into(),
        });
    }

    fn recon_tick(&mut self, node: u32) {
        if self.quiescing {
            return;
        }
        self.schedule(self.now + self.cfg.t_recon, Ev::ReconTick(node));
        let n_out = self.nodes[node as usize].n_outbound;
        for _ in 0..n_out {
            let v = &mut self.nodes[node as usize];
            let ch = v.channels[v.rotation % n_out];
            v.rotation += 1;
            let session = self.initiator(ch);
            if session.in_flight() {
                continue;
            }
            let request = session.begin_round().expect("idle session");
            self.send(ch, Message::ReconRequest(request));
            break;
        }
    }

    fn arm_serve(&mut self, node: u32) {
        if !self.nodes[node as usize].serve_timer {
            self.nodes[node as usize].serve_timer = true;
            let delay = self.serve_delay.sample(&mut self.timers);
            self.schedule(self.now + delay, Ev::Serve(node));
        }
    }

    /// Answer pending reconciliation requests, at most one per peer every
    /// `t_recon` seconds.
    fn serve(&mut self, node: u32) {
        self.nodes[node as usize].serve_timer = false;
        let pending = std::mem::take(&mut self.nodes[node as usize].pending);
        let mut deferred = Vec::new();
        for (ch, req) in pending {
            let reply = self.channels[ch as usize].reverse;
            if self.now - self.channels[reply as usize].last_served < self.cfg.t_recon {
                deferred.push((ch, req));
                continue;
            }
            self.channels[reply as usize].last_served = self.now;
            match self.responder(reply).serve_round(&req) {
                Ok((response, evicted)) => {
                    self.send(reply, Message::ReconSketch(response));
                    if !evicted.is_empty() {
                        self.send(reply, Message::Inv { items: evicted, kind: InvKind::Evicted });
                    }
                }
                Err(_) => self.ledger.protocol_errors += 1,
            }
        }
        if !deferred.is_empty() {
            self.nodes[node as usize].pending = deferred;
            self.arm_serve(node);
        }
    }
}
