//! Link-level simulator and optimizer for downlink cluster-free multi-antenna
//! NOMA.
//!
//! A [`channel::NetworkInstance`] holds the per-link channels of one or more
//! cells. A [`sic::SicMatrix`] decides which users cancel which other users'
//! signals before decoding their own, and [`sic::rate_report`] turns a SIC
//! matrix plus a set of beamformers into decoding rates and a sum rate.
//! SDMA, beamformer-based NOMA and cluster-based NOMA are all particular SIC
//! matrices, built by the constructors in [`sic`].
//!
//! On top of the rate model sit:
//!
//! - [`beamforming`]: zero-forcing initialization and projected gradient
//!   ascent on a smoothed-min sum-rate objective,
//! - [`search`]: exhaustive, greedy and local search over SIC matrices,
//! - [`coordination`]: centralized, distributed and GNN-based multi-cell
//!   coordination with exact message-overhead accounting,
//! - [`harness`]: configuration, seeded sweeps and CSV/JSON output used by
//!   the `noma-forge` binary.

pub mod beamforming;
pub mod channel;
pub mod coordination;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod search;
pub mod sic;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
