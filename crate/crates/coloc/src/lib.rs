//! Simulator and experiment runner for multi-agent UWB cooperative
//! localization.
//!
//! A run simulates one world ([`sim`]), feeds the identical odometry and
//! range stream to each filter variant ([`harness`]), exchanges beliefs only
//! when two agents range to each other ([`network`]), and writes per-agent
//! CSVs plus a JSON summary. [`report`] aggregates runs across seeds.

pub mod config;
pub mod harness;
pub mod network;
pub mod report;
pub mod sim;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// Bad arguments, config, or I/O.
    pub const CONFIG: i32 = 1;
    pub const NUMERICAL: i32 = 2;
}
