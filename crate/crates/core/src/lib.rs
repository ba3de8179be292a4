//! Deterministic in-process private-blockchain simulator and benchmark
//! harness.

pub mod chain;
pub mod cluster;
pub mod consensus;
pub mod driver;
pub mod exec;
pub mod hash;
pub mod netsim;
pub mod node;
pub mod scenario;
pub mod state;
pub mod workloads;
