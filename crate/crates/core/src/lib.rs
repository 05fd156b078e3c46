//! Link-level simulation core for SINR estimation in user-centric LEO beamforming.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure computation:
//!
//! - [`geometry`]: satellite pass, slant range, elevation, `(u, v)` direction
//!   cosines and clustered user drops.
//! - [`channel`]: per-element clear-sky channel coefficients of a direct
//!   radiating array.
//! - [`beamforming`]: the MMSE / per-antenna-normalized ground-truth SINR oracle.
//! - [`autodiff`]: a small tape-based reverse-mode engine with Adam, warm-restart
//!   cosine learning rates and cycle-based early stopping.
//! - [`dmhsa`]: the dual multi-head self-attention SINR estimator.
//! - [`scheduling`]: random and priority-queue user schedulers.
//! - [`scenario`]: glue that turns a scenario description into model inputs and
//!   oracle labels.
//!
//! File formats, configuration and the command line live in the `dmhsa-lab`
//! companion crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod beamforming;
pub mod channel;
pub mod cmatrix;
pub mod dmhsa;
pub mod geometry;
pub mod math;
pub mod scenario;
pub mod scheduling;
pub mod seed;

pub use cmatrix::CMatrix;
pub use num_complex::Complex64;
