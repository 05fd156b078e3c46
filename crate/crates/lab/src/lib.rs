//! Experiment runner for the DMHSA SINR estimator.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod modelfile;
pub mod report;
pub mod train;
pub mod eval;
pub mod selftest;
pub mod commands;
