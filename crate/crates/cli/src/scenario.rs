//! Scenario files: a base simulator config plus axes to sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use erlay_sim::{Protocol, SimConfig};

use crate::CliError;

pub const BUILTIN: &str = include_str!("../scenarios/desk.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Master seed; every run seed is derived from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<Scenario>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub protocols: Vec<Protocol>,
    /// Total node counts, split 1:9 public:private.
    #[serde(default = "default_nodes")]
    pub nodes: Vec<usize>,
    #[serde(default)]
    pub connectivity: Vec<usize>,
    #[serde(default)]
    pub tx_rate: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub base: SimConfig,
}

fn default_nodes() -> Vec<usize> {
    vec![1000]
}

fn default_replicates() -> u32 {
    1
}

/// One simulator run of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub run_id: String,
    pub scenario: String,
    pub replicate: u32,
    pub config: SimConfig,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<ScenarioFile, CliError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        file.check()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<ScenarioFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        ScenarioFile::parse(&text)
    }

    fn check(&self) -> Result<(), CliError> {
        let mut names = std::collections::HashSet::new();
        for s in &self.scenarios {
            if !names.insert(s.name.as_str()) {
                return Err(CliError::Config(format!("scenario {} is defined twice", s.name)));
            }
            if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(CliError::Config(format!("bad scenario name {:?}", s.name)));
            }
            if s.protocols.is_empty() || s.nodes.is_empty() || s.replicates == 0 {
                return Err(CliError::Config(format!("scenario {} has an empty axis", s.name)));
            }
        }
        Ok(())
    }

    /// Expand the selected scenarios (all when `only` is empty) into runs
    /// and validate every resulting config.
    pub fn expand(&self, only: &[String]) -> Result<Vec<RunSpec>, CliError> {
        if let Some(unknown) = only.iter().find(|n| !self.scenarios.iter().any(|s| &s.name == *n)) {
            return Err(CliError::Usage(format!("no scenario named {unknown}")));
        }
        let mut runs = Vec::new();
        for s in self.scenarios.iter().filter(|s| only.is_empty() || only.contains(&s.name)) {
            let conns = if s.connectivity.is_empty() { vec![s.base.connectivity] } else { s.connectivity.clone() };
            let rates = if s.tx_rate.is_empty() { vec![s.base.tx_rate] } else { s.tx_rate.clone() };
            for replicate in 0..s.replicates {
                // Shared by every point of the replicate, so protocols are
                // compared on the same topology and schedule.
                let seed = derive_seed(self.seed, &s.name, replicate);
                for &nodes in &s.nodes {
                    for &connectivity in &conns {
                        for &tx_rate in &rates {
                            for &protocol in &s.protocols {
                                let n_public = nodes / 10;
                                let config = SimConfig {
                                    n_public,
                                    n_private: nodes - n_public,
                                    connectivity,
                                    tx_rate,
                                    protocol,
                                    seed,
                                    ..s.base.clone()
                                };
                                let run_id = format!(
                                    "{}-{}-n{nodes}-c{connectivity}-r{tx_rate}-s{replicate}",
                                    s.name,
                                    protocol.name()
                                );
                                config.validate().map_err(|e| CliError::Config(format!("{run_id}: {e}")))?;
                                runs.push(RunSpec { run_id, scenario: s.name.clone(), replicate, config });
                            }
                        }
                    }
                }
            }
        }
        Ok(runs)
    }
}

/// First eight bytes of SHA-256 over the master seed, scenario name and
/// replicate index.
pub fn derive_seed(master: u64, scenario: &str, replicate: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((scenario.len() as u64).to_le_bytes());
    h.update(scenario.as_bytes());
    h.update(replicate.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
