use std::collections::{HashMap, HashSet};

use erlay_core::recon::wire::{InvKind, Message};
use erlay_sim::metrics::SpyKind;
use erlay_sim::{run, run_observed, Ledger, Protocol, SendInfo, SimConfig};

fn config(nodes: usize, protocol: Protocol, duration_s: f64, seed: u64) -> SimConfig {
    SimConfig { protocol, duration_s, seed, ..SimConfig::desk(nodes) }
}

// Ledgers hold NaN for unreached fractions, so compare their printed form.
fn fingerprint(l: &Ledger) -> String {
    format!("{l:?}")
}

#[test]
fn identical_seeds_give_identical_ledgers() {
    for protocol in [Protocol::BtcFlood, Protocol::Erlay] {
        let mut c = config(300, protocol, 20.0, 7);
        c.black_hole_fraction = 0.1;
        c.spies.public_fraction = 0.2;
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        c.seed = 8;
        let other = run(&c).unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&other));
    }
}

#[test]
fn every_transaction_reaches_every_node() {
    for seed in 0..10 {
        for protocol in [Protocol::BtcFlood, Protocol::Erlay] {
            let l = run(&config(1000, protocol, 8.0, seed)).unwrap();
            assert!(!l.txs.is_empty());
            assert!(l.fully_covered(), "{} seed {seed}: shortfall {}", l.protocol, l.coverage_shortfall());
            assert!(!l.horizon_hit);
            assert_eq!(l.protocol_errors, 0);
            assert_eq!(l.stuck_rounds, 0);
        }
    }
}

#[test]
fn bytes_received_equal_bytes_sent() {
    for protocol in [Protocol::BtcFlood, Protocol::Erlay, Protocol::Sweep { flood_inbound: 2, flood_outbound: 4 }] {
        let mut c = config(400, protocol, 20.0, 3);
        c.black_hole_fraction = 0.1;
        let l = run(&c).unwrap();
        assert_eq!(l.received_bytes, l.total_sent(), "{}", l.protocol);
        assert_eq!(l.messages_received, l.messages_sent);
    }
}

#[test]
fn flooding_announces_each_transaction_once_or_twice_per_link() {
    let c = config(1000, Protocol::BtcFlood, 20.0, 5);
    let l = run(&c).unwrap();
    assert!(l.fully_covered());
    let links = (c.n_nodes() * c.connectivity) as u32;
    for (tx, &n) in l.flood_items_per_tx.iter().enumerate() {
        assert!((links..=2 * links).contains(&n), "tx {tx}: {n} announcements over {links} links");
    }
}

#[test]
fn duplicate_announcements_are_not_requested() {
    let l = run(&config(500, Protocol::BtcFlood, 20.0, 9)).unwrap();
    // One GETDATA item per node and transaction, except at the origin.
    let expected = l.txs.len() as u64 * (l.n_nodes as u64 - 1);
    assert_eq!(l.getdata_items, expected);
    assert_eq!(l.duplicate_txs, 0);
}

#[derive(Default)]
struct Trace {
    floods: Vec<(SendInfo, usize)>,
    latencies: Vec<f64>,
}

impl Trace {
    fn record(&mut self, info: &SendInfo, msg: &Message<u32>) {
        self.latencies.push(info.latency);
        if let Message::Inv { items, kind: InvKind::Flood } = msg {
            self.floods.push((*info, items.len()));
        }
    }
}

#[test]
fn erlay_floods_only_from_public_nodes_on_outbound_links() {
    let c = config(500, Protocol::Erlay, 20.0, 2);
    let mut trace = Trace::default();
    let l = run_observed(&c, &mut |i: &SendInfo, m: &Message<u32>| trace.record(i, m)).unwrap();
    assert!(l.fully_covered());
    assert!(!trace.floods.is_empty());
    for (info, _) in &trace.floods {
        assert!(info.from_public && info.outbound, "{info:?}");
    }

    // BTCFlood uses every kind of link.
    let c = config(500, Protocol::BtcFlood, 20.0, 2);
    let mut trace = Trace::default();
    run_observed(&c, &mut |i: &SendInfo, m: &Message<u32>| trace.record(i, m)).unwrap();
    assert!(trace.floods.iter().any(|(i, _)| !i.outbound));
    assert!(trace.floods.iter().any(|(i, _)| !i.from_public));
}

#[test]
fn erlay_public_nodes_flood_to_at_most_eight_peers() {
    let mut c = config(500, Protocol::Erlay, 20.0, 4);
    c.connectivity = 16;
    let mut trace = Trace::default();
    let l = run_observed(&c, &mut |i: &SendInfo, m: &Message<u32>| trace.record(i, m)).unwrap();
    assert!(l.fully_covered());
    let mut targets: HashMap<u32, HashSet<u32>> = HashMap::new();
    for (info, _) in &trace.floods {
        targets.entry(info.from).or_default().insert(info.to);
    }
    assert!(targets.values().all(|t| t.len() <= 8));
    assert!(targets.values().any(|t| t.len() == 8));
}

#[test]
fn link_latencies_stay_in_the_configured_range() {
    let mut c = config(300, Protocol::Erlay, 10.0, 6);
    c.latency.min_s = 0.05;
    c.latency.max_s = 0.12;
    let mut trace = Trace::default();
    run_observed(&c, &mut |i: &SendInfo, m: &Message<u32>| trace.record(i, m)).unwrap();
    assert!(!trace.latencies.is_empty());
    assert!(trace.latencies.iter().all(|&x| (0.05..=0.12).contains(&x)));
}

#[test]
fn origination_matches_rate_times_duration() {
    let mut c = config(20, Protocol::BtcFlood, 600.0, 11);
    c.connectivity = 4;
    c.n_public = 6;
    c.n_private = 14;
    let l = run(&c).unwrap();
    // Poisson(4200): four standard deviations either side.
    assert!((3940..=4460).contains(&l.txs.len()), "{}", l.txs.len());
    assert!(l.txs.windows(2).all(|w| w[0].origin_time <= w[1].origin_time));
    assert!(l.txs.iter().all(|t| t.origin_time <= 600.0));
    assert!(l.fully_covered());
}

#[test]
fn originators_are_honest_private_nodes() {
    let mut c = config(500, Protocol::Erlay, 20.0, 12);
    c.spies.private_fraction = 0.3;
    c.spies.public_fraction = 0.3;
    c.black_hole_fraction = 0.1;
    let l = run(&c).unwrap();
    let spies: HashSet<u32> = l.spy_groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    for t in &l.txs {
        assert!(t.origin as usize >= c.n_public);
        assert!(!spies.contains(&t.origin));
    }
    // First exposures only.
    let mut seen = HashSet::new();
    assert!(l.spy_log.iter().all(|r| seen.insert((r.spy, r.tx))));
    assert!(l.first_spy_success(SpyKind::Public).is_some());
}

#[test]
fn black_holes_do_not_stop_coverage() {
    for protocol in [Protocol::BtcFlood, Protocol::Erlay] {
        let mut c = config(500, protocol, 20.0, 13);
        c.black_hole_fraction = 0.1;
        let l = run(&c).unwrap();
        assert_eq!(l.n_reachable, 500 - 5);
        assert!(l.fully_covered(), "{}: shortfall {}", l.protocol, l.coverage_shortfall());
    }
}

#[test]
fn one_reconciliation_round_per_node_per_second() {
    let l = run(&config(1000, Protocol::Erlay, 60.0, 14)).unwrap();
    let rates = l.round_rates().unwrap();
    // One round per node per second, each link every connectivity seconds.
    assert!((rates.rounds as f64 / l.end_time / 1000.0 - 1.0).abs() < 0.1);
    assert!((4.0..=10.0).contains(&rates.mean_diff), "{rates:?}");
    assert!(rates.est_correct > 0.85);
}

#[test]
fn smallest_network_requests_each_body_once() {
    // Two publics and one private: every node but the origin fetches once.
    let c = SimConfig {
        n_public: 2,
        n_private: 1,
        connectivity: 1,
        protocol: Protocol::BtcFlood,
        duration_s: 30.0,
        ..SimConfig::default()
    };
    let l = run(&c).unwrap();
    assert!(l.fully_covered());
    assert_eq!(l.getdata_items, 2 * l.txs.len() as u64);
}

#[test]
fn reach_latency_is_monotone_in_the_fraction() {
    for protocol in [Protocol::BtcFlood, Protocol::Erlay] {
        let l = run(&config(500, protocol, 20.0, 15)).unwrap();
        let lat: Vec<f64> = (1..=20).map(|k| l.reach_latency(k as f64 / 20.0).unwrap()).collect();
        assert!(lat.windows(2).all(|w| w[0] <= w[1]), "{lat:?}");
    }
}
