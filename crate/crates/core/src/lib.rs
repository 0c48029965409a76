//! Bistatic joint communication and sensing from asynchronous CIR streams.
//!
//! Channel estimates from the training field of ordinary data packets are
//! aligned in time, localized, tracked, and turned into micro-Doppler
//! spectrograms without a shared clock between transmitter and receiver.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod microdoppler;
pub mod overhead;
pub mod simulator;
pub mod sync;
pub mod tracking;
pub mod waveform;

pub use error::{Error, Result};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
