//! Core library for VO-centric grid operations: a simulated grid fabric and
//! the analyses an operations team runs over it.

pub mod accounting;
pub mod fabric;
pub mod fixtures;
pub mod incidents;
pub mod probes;
pub mod storage_ops;
pub mod topology;
pub mod types;

pub use types::{format_bytes, Bytes, ResourceId, ResourceKind, Timestamp, Window};
