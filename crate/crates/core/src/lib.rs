//! Tenderbake dynamic repeated consensus: protocol state machines, a
//! deterministic partial-synchrony simulator and trace oracles.

pub mod chain;
pub mod consensus;
pub mod driver;
pub mod encoding;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod synchronizer;
pub mod trace;
pub mod types;
pub mod verifier;
