//! Fleet-scale FPGA regression orchestration: campaign manifests, device
//! inventory, shard scheduling, CI trigger rules, execution and reporting.

pub mod engine;
pub mod fleet;
pub mod manifest;
pub mod reporting;
pub mod scheduler;
pub mod triggers;
pub mod units;
pub mod yaml;

pub use units::{Ratio, Seconds};
