use erlay_core::gf::SUPPORTED_WIDTHS;
use erlay_core::recon::ReconParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::SizeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[serde(rename = "btcflood")]
    BtcFlood,
    Erlay,
    /// Reconciliation on every link, with public nodes also flooding to
    /// their first `flood_inbound` inbound and first `flood_outbound`
    /// outbound peers.
    Sweep { flood_inbound: usize, flood_outbound: usize },
}

impl Protocol {
    pub fn name(&self) -> String {
        match self {
            Protocol::BtcFlood => "BTCFlood".to_string(),
            Protocol::Erlay => "Erlay".to_string(),
            Protocol::Sweep { flood_inbound, flood_outbound } => format!("Erlay-X{flood_inbound}-Y{flood_outbound}"),
        }
    }

    pub fn reconciles(&self) -> bool {
        !matches!(self, Protocol::BtcFlood)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig { min_s: 0.01, max_s: 0.30 }
    }
}

/// Fractions of public / private nodes converted to passive spies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpyConfig {
    pub public_fraction: f64,
    pub private_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    pub bits: u32,
    pub c_const: u32,
    pub q_max: f64,
    pub max_set_size: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        let p = ReconParams::default();
        ReconConfig { bits: p.bits, c_const: p.c_const, q_max: p.q_max, max_set_size: p.max_set_size }
    }
}

impl From<ReconConfig> for ReconParams {
    fn from(c: ReconConfig) -> ReconParams {
        ReconParams { bits: c.bits, c_const: c.c_const, q_max: c.q_max, max_set_size: c.max_set_size }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_public: usize,
    pub n_private: usize,
    /// Outbound connections per node.
    pub connectivity: usize,
    pub tx_rate: f64,
    pub duration_s: f64,
    /// Extra time after `duration_s` allowed for full coverage.
    pub horizon_s: f64,
    /// Stop originating after this many transactions.
    pub tx_limit: Option<usize>,
    pub protocol: Protocol,
    pub t_recon: f64,
    /// Mean flush delay on outbound links; protocol default when unset.
    pub t_oi: Option<f64>,
    /// Mean flush delay on inbound links.
    pub t_ii: Option<f64>,
    /// Mean responder delay for reconciliation requests.
    pub t_ri: f64,
    /// Outbound links a public Erlay node floods to.
    pub erlay_flood_outbound: usize,
    /// Fraction of public nodes that silently absorb everything.
    pub black_hole_fraction: f64,
    pub spies: SpyConfig,
    pub seed: u64,
    pub latency: LatencyConfig,
    pub recon: ReconConfig,
    pub sizes: SizeModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_public: 6_000,
            n_private: 54_000,
            connectivity: 8,
            tx_rate: 7.0,
            duration_s: 600.0,
            horizon_s: 300.0,
            tx_limit: None,
            protocol: Protocol::Erlay,
            t_recon: 1.0,
            t_oi: None,
            t_ii: None,
            t_ri: 1.0,
            erlay_flood_outbound: 8,
            black_hole_fraction: 0.0,
            spies: SpyConfig::default(),
            seed: 1,
            latency: LatencyConfig::default(),
            recon: ReconConfig::default(),
            sizes: SizeModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("need at least connectivity + 1 = {needed} public nodes, have {have}")]
    TooFewPublic { needed: usize, have: usize },
    #[error("connectivity must be at least 1")]
    ZeroConnectivity,
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    BadFraction { name: &'static str, value: f64 },
    #[error("latency range [{min}, {max}] is invalid")]
    BadLatency { min: f64, max: f64 },
    #[error("short-ID width {0} is not supported")]
    BadWidth(u32),
    #[error("sweep floods to {flood_outbound} outbound peers but connectivity is {connectivity}")]
    InfeasibleSweep { flood_outbound: usize, connectivity: usize },
    #[error("{reason}")]
    Other { reason: String },
}

impl SimConfig {
    /// Default parameters at `nodes` total nodes, one public per nine
    /// private.
    pub fn desk(nodes: usize) -> SimConfig {
        let n_public = nodes / 10;
        SimConfig { n_public, n_private: nodes - n_public, ..SimConfig::default() }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_public + self.n_private
    }

    /// Effective (outbound, inbound) flush delay means.
    pub fn diffusion(&self) -> (f64, f64) {
        let (out, inb) = match self.protocol {
            Protocol::BtcFlood => (2.0, 5.0),
            Protocol::Erlay | Protocol::Sweep { .. } => (1.0, 5.0),
        };
        (self.t_oi.unwrap_or(out), self.t_ii.unwrap_or(inb))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.connectivity == 0 {
            return Err(ConfigError::ZeroConnectivity);
        }
        if self.n_public < self.connectivity + 1 {
            return Err(ConfigError::TooFewPublic { needed: self.connectivity + 1, have: self.n_public });
        }
        let (t_oi, t_ii) = self.diffusion();
        for (name, value) in [
            ("tx_rate", self.tx_rate),
            ("duration_s", self.duration_s),
            ("t_recon", self.t_recon),
            ("t_ri", self.t_ri),
            ("t_oi", t_oi),
            ("t_ii", t_ii),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        if !(self.horizon_s.is_finite() && self.horizon_s >= 0.0) {
            return Err(ConfigError::NotPositive { name: "horizon_s", value: self.horizon_s });
        }
        for (name, value) in [
            ("black_hole_fraction", self.black_hole_fraction),
            ("spies.public_fraction", self.spies.public_fraction),
            ("spies.private_fraction", self.spies.private_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::BadFraction { name, value });
            }
        }
        let lat = self.latency;
        if !(lat.min_s.is_finite() && lat.max_s.is_finite() && 0.0 <= lat.min_s && lat.min_s <= lat.max_s) {
            return Err(ConfigError::BadLatency { min: lat.min_s, max: lat.max_s });
        }
        if !SUPPORTED_WIDTHS.contains(&self.recon.bits) {
            return Err(ConfigError::BadWidth(self.recon.bits));
        }
        if !(self.recon.q_max.is_finite() && self.recon.q_max >= 0.0) {
            return Err(ConfigError::NotPositive { name: "recon.q_max", value: self.recon.q_max });
        }
        if let Protocol::Sweep { flood_outbound, .. } = self.protocol {
            if flood_outbound > self.connectivity {
                return Err(ConfigError::InfeasibleSweep { flood_outbound, connectivity: self.connectivity });
            }
        }
        let public_left = self.n_public as f64 * (1.0 - self.black_hole_fraction - self.spies.public_fraction);
        if public_left < 0.0 {
            return Err(ConfigError::Other { reason: "black holes and public spies exceed the public nodes".into() });
        }
        if self.n_private == 0 || self.spies.private_fraction >= 1.0 {
            return Err(ConfigError::Other { reason: "no private node is left to originate transactions".into() });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scale_keeps_ratio() {
        let c = SimConfig::desk(1000);
        assert_eq!((c.n_public, c.n_private), (100, 900));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn diffusion_defaults_follow_protocol() {
        let mut c = SimConfig::desk(1000);
        c.protocol = Protocol::BtcFlood;
        assert_eq!(c.diffusion(), (2.0, 5.0));
        c.protocol = Protocol::Erlay;
        assert_eq!(c.diffusion(), (1.0, 5.0));
        c.t_ii = Some(3.0);
        assert_eq!(c.diffusion(), (1.0, 3.0));
    }

    #[test]
    fn rejects_impossible_parameters() {
        let c = SimConfig { n_public: 5, n_private: 45, ..SimConfig::default() };
        assert_eq!(c.validate(), Err(ConfigError::TooFewPublic { needed: 9, have: 5 }));
        let c = SimConfig { tx_rate: 0.0, ..SimConfig::desk(1000) };
        assert!(matches!(c.validate(), Err(ConfigError::NotPositive { name: "tx_rate", .. })));
        let c = SimConfig { black_hole_fraction: 1.5, ..SimConfig::desk(1000) };
        assert!(matches!(c.validate(), Err(ConfigError::BadFraction { .. })));
        let c = SimConfig { protocol: Protocol::Sweep { flood_inbound: 0, flood_outbound: 9 }, ..SimConfig::desk(1000) };
        assert!(matches!(c.validate(), Err(ConfigError::InfeasibleSweep { .. })));
        let mut c = SimConfig::desk(1000);
        c.recon.bits = 12;
        assert_eq!(c.validate(), Err(ConfigError::BadWidth(12)));
        let mut c = SimConfig::desk(1000);
        c.latency = LatencyConfig { min_s: 0.5, max_s: 0.1 };
        assert!(matches!(c.validate(), Err(ConfigError::BadLatency { .. })));
    }
}
