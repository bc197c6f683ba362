//! Deterministic packet-level simulator for receiver-driven, credit-based
//! datacenter congestion control, with a DCTCP baseline.

pub mod config;
pub mod dctcp;
pub mod experiments;
pub mod error;
pub mod metrics;
pub mod net;
pub mod presets;
pub mod runner;
pub mod sim;
pub mod topology;
pub mod world;
pub mod workload;
pub mod xpass;

pub use error::{Error, Result};
