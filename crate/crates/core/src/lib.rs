//! Trace-driven simulator for page placement on two-tier memory: a local
//! DRAM node plus one or more CPU-less CXL nodes.

pub mod chameleon;
pub mod cli;
pub mod config;
pub mod model;
pub mod policy;
pub mod sim;
pub mod trace;
pub mod workload;
pub mod scenario;
