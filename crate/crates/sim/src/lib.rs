//! Discrete-event simulation of BTCFlood and Erlay transaction relay.

pub mod config;
pub mod engine;
pub mod metrics;
pub mod seeds;
pub mod topology;

pub use config::{ConfigError, Protocol, SimConfig};
pub use engine::{run, run_observed, Observer, SendInfo};
pub use metrics::{ByteClass, Ledger};
