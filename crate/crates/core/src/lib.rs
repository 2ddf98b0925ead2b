//! Thermal-light ghost imaging with fractional-order moments.
//!
//! The pipeline: an [`object_model::ObjectMask`] is illuminated by simulated
//! speckle ([`speckle_sim`]), the paired bucket/reference stream feeds
//! [`moment_engine`] accumulators, and [`metrics`] scores the reconstruction
//! against the closed forms in [`analytic`].

// test grids use the order 2.7183 literally
#![cfg_attr(test, allow(clippy::approx_constant))]

pub mod analytic;
pub mod cli;
pub mod metrics;
pub mod moment_engine;
pub mod numerics;
pub mod object_model;
pub mod reporting_io;
pub mod speckle_sim;
pub mod stats;
