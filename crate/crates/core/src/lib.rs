//! Joint detection and angle estimation of random jammers in a beamspace
//! massive-MIMO uplink.
//!
//! The pipeline is:
//!
//! 1. [`model`]: array geometry, DFT beamspace combiner, line-of-sight channels
//!    and randomized scenario sampling.
//! 2. [`airsim`]: uplink training-phase synthesis and projection of the
//!    received block onto the unused pilots.
//! 3. [`glrt`]: the iterative GLRT with spatial covariance identification
//!    (GLRT-SCI).
//! 4. [`msd`]: the two matched-subspace benchmark detectors (MSD-IS, MSD-ICM).
//! 5. [`eval`]: Monte Carlo threshold calibration, detection matching and
//!    P_D / RMSE sweeps.
//!
//! [`config`] and [`formats`] hold the experiment configuration and every
//! on-disk format the CLI reads or writes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airsim;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod formats;
pub mod glrt;
pub mod linalg;
pub mod model;
pub mod msd;
pub mod seeding;

pub use error::{Error, Result};
