//! Two-phase network bootstrap: publics connect to publics, then privates
//! connect to publics.

use std::collections::{HashSet, VecDeque};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, SimConfig};
use crate::seeds::{rng_for, Stream};

/// Outbound connections; `connections[i] = (from, to)` where `from`
/// initiated. Public nodes are `0..n_public`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub n_public: usize,
    pub n_private: usize,
    pub connections: Vec<(u32, u32)>,
    /// Attempts that produced a disconnected graph before this one.
    pub retries: u32,
}

const MAX_ATTEMPTS: u32 = 64;

impl Topology {
    pub fn n_nodes(&self) -> usize {
        self.n_public + self.n_private
    }

    pub fn is_public(&self, node: u32) -> bool {
        (node as usize) < self.n_public
    }

    pub fn outbound_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for &(from, _) in &self.connections {
            deg[from as usize] += 1;
        }
        deg
    }

    pub fn inbound_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for &(_, to) in &self.connections {
            deg[to as usize] += 1;
        }
        deg
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.connections {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0u32]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}

pub fn build_topology(config: &SimConfig) -> Result<Topology, ConfigError> {
    let c = config.connectivity;
    if c == 0 {
        return Err(ConfigError::ZeroConnectivity);
    }
    if config.n_public < c + 1 {
        return Err(ConfigError::TooFewPublic { needed: c + 1, have: config.n_public });
    }
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = rng_for(config.seed, Stream::Topology, attempt as u64);
        let mut topo = generate(config.n_public, config.n_private, c, &mut rng);
        if topo.is_connected() {
            topo.retries = attempt;
            return Ok(topo);
        }
    }
    Err(ConfigError::Other { reason: format!("no connected topology after {MAX_ATTEMPTS} attempts") })
}

fn generate(n_public: usize, n_private: usize, c: usize, rng: &mut ChaCha8Rng) -> Topology {
    let mut connections = Vec::with_capacity((n_public + n_private) * c);
    let mut linked: HashSet<(u32, u32)> = HashSet::new();
    for i in 0..n_public as u32 {
        let mut picked: Vec<u32> = Vec::with_capacity(c);
        // Prefer peers with no connection to us yet; random probing first,
        // then an exhaustive pass for small or dense networks.
        let mut tries = 0;
        while picked.len() < c && tries < 32 * c {
            tries += 1;
            let j = rng.gen_range(0..n_public as u32);
            if j != i && !picked.contains(&j) && !linked.contains(&(j, i)) {
                picked.push(j);
            }
        }
        if picked.len() < c {
            let mut rest: Vec<u32> = (0..n_public as u32).filter(|&j| j != i && !picked.contains(&j)).collect();
            rest.shuffle(rng);
            let (fresh, reverse): (Vec<u32>, Vec<u32>) = rest.into_iter().partition(|&j| !linked.contains(&(j, i)));
            for j in fresh.into_iter().chain(reverse) {
                if picked.len() == c {
                    break;
                }
                picked.push(j);
            }
        }
        for j in picked {
            linked.insert((i, j));
            connections.push((i, j));
        }
    }
    for p in 0..n_private {
        let i = (n_public + p) as u32;
        for j in index::sample(rng, n_public, c) {
            connections.push((i, j as u32));
        }
    }
    Topology { n_public, n_private, connections, retries: 0 }
}
