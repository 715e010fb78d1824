//! Spatiotemporal synchronization of distributed radio apertures.
//!
//! Every aperture carries a 7-dimensional state (position, Euler orientation,
//! clock offset). Agents with unknown states are localized and synchronized
//! against anchors from noisy line-of-sight channel snapshots exchanged between
//! every ordered aperture pair. Nuisance amplitudes and noise variances are
//! concentrated out in closed form and the resulting profile likelihoods drive a
//! regularized particle-based loopy belief propagation.
//!
//! Module map:
//!
//! - [`geometry`]: rotations, URA layouts, global to local channel parameters
//! - [`manifold`]: Kronecker-structured spatiotemporal steering vectors
//! - [`channel`]: synthetic observations for all ordered pairs
//! - [`likelihood`]: amplitude/noise concentration and profile log-likelihood
//! - [`bp`]: particle sets, resampling and the loopy BP iteration
//! - [`montecarlo`]: scenarios, campaigns, error metrics and result files

pub mod bp;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod likelihood;
pub mod manifold;
pub mod montecarlo;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{ApertureState, ArrayConfig, LocalChannelParams, StateVector, STATE_DIM};

/// Propagation speed of radio waves in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
