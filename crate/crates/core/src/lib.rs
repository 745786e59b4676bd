//! Delay-aware uplink fronthaul allocation for cloud radio access networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: exponential integral, bisection, complex matrix inversion
//! - [`channel`]: hexagonal layouts, path gains and Rayleigh fading
//! - [`phy`]: quantization noise and zero-forcing rates
//! - [`priority`]: the closed-form approximate priority function
//! - [`allocator`]: the iterative delay-aware allocator and the two baselines
//! - [`sim`]: arrivals, queues, episodes and price-to-budget calibration
//! - [`oracle`]: discretized relative value iteration for one or two flows
//! - [`config`] and [`experiment`]: configuration and sweep orchestration

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod oracle;
pub mod params;
pub mod phy;
pub mod priority;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use params::SystemParams;
