//! Vehicle tracking and downlink beam design for mmWave vehicle-to-infrastructure links.
//!
//! The crate is organised bottom-up:
//!
//! - [`array_channel`]: ULA geometry, spatial frequency, fading and link budget.
//! - [`motion`]: the linear kinematic state model and ground-truth simulation.
//! - [`ekf`]: extended Kalman filter tracking from uplink sounding samples.
//! - [`sounding`]: combiner design (generalized Rayleigh quotient, hybrid OMP, manifold baseline).
//! - [`accel`]: minimum-variance unbiased acceleration estimation and gating.
//! - [`codebook`]: road-aware beam-region division and codeword synthesis.
//! - [`selector`]: predictive beamformer selection and DFT baselines.
//! - [`harness`]: seeded Monte-Carlo experiments, metrics and CSV output.
//! - [`cli`]: the `v2i` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accel;
pub mod array_channel;
pub mod cli;
pub mod codebook;
pub mod ekf;
pub mod error;
pub mod grid;
pub mod harness;
pub mod motion;
pub mod rng;
pub mod selector;
pub mod sounding;

pub use error::{Error, Result};

/// Complex scalar used throughout the crate.
pub type C64 = nalgebra::Complex<f64>;
