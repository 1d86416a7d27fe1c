//! Activity profiling and two-stage anomaly detection for IoT device traffic.
//!
//! Flows are clustered per device into activities by a four-level rule tree,
//! each activity gets its own small convolutional autoencoder, and detection
//! runs in two stages: a fuzzy rule match against the activity keys, then
//! reconstruction-error scoring by only the matched submodels.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod artifact;
pub mod autoencoder;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod traffic;
pub mod tree;

pub use error::{Error, Result};
