//! Downlink channel reconstruction for FDD multi-antenna OFDM links.
//!
//! The uplink pilot block is decomposed into a sparse set of propagation
//! paths (gain, delay, angle) by a two-dimensional Newtonized orthogonal
//! matching pursuit. Delays and angles are shared by both duplex bands, so
//! the base station only needs a handful of downlink-refined gains to rebuild
//! the full downlink channel.
//!
//! Module map:
//!
//! * [`model`] - array/OFDM geometry, atoms and channel synthesis.
//! * [`nomp`] - the pursuit estimator and its stopping rules.
//! * [`downlink`] - beamformed pilots, gain refinement and reconstruction.
//! * [`bounds`] - Fisher information and Cramer-Rao bounds.
//! * [`baselines`] - LS and genie LMMSE reference estimators.
//! * [`harness`] - scenarios, noise, metrics and Monte-Carlo experiments.

pub mod baselines;
pub mod bounds;
pub mod downlink;
mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod nomp;

pub use error::{Error, Result};
pub use model::{ChannelVector, NormalizedPath, PathComponent, SystemConfig};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex<f64>;
