//! Simulator and analytic oracle for adaptive network-device cooperation
//! (ANDCoop) in ultra-reliable low-latency industrial downlinks.
//!
//! A controller with `M` access points serves `N` devices within a cycle of
//! `T` seconds. Devices whose estimated channel is strong are served with
//! rate-adaptive single-hop TDMA slots; the remaining weak devices share a
//! fixed-rate two-hop phase in which every device that decodes the broadcast
//! acts as a decode-and-forward relay.
//!
//! Module map:
//!
//! * [`channel`]: geometry, path loss, blockage, shadowing and per-cycle
//!   Rayleigh fading with MMSE estimation error.
//! * [`link`]: capacity outage predicate and the m-transmitter failure
//!   probability (Erlang CDF through the regularized incomplete gamma).
//! * [`protocol`]: one cycle of ANDCoop, single-hop, two-hop and K-best.
//! * [`analytic`]: closed-form two-hop outage, single-hop bounds, DMT curves.
//! * [`montecarlo`]: deterministic parallel replication engine.
//! * [`optimizer`]: grid search over the time split and rate back-off.
//! * [`coverage`]: outage-coverage maps with a blocking wall.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
pub mod coverage;
mod error;
pub mod link;
pub mod montecarlo;
pub mod optimizer;
pub mod protocol;
pub mod rng;
pub mod special;

pub use error::{Error, Result};

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0 - 3.0)
}

/// Converts a decibel ratio to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear ratio to decibels.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
