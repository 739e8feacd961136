//! Downlink SINR and ergodic rates of multicell massive MIMO over Rician
//! fading with MMSE channel estimation, for MRT and RZF precoding.
//!
//! Two engines compute the same quantities: a Monte Carlo simulator
//! ([`montecarlo`]) and large-system deterministic equivalents
//! ([`detequiv`]), with closed-form limits in [`limits`].

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod detequiv;
pub mod error;
pub mod limits;
pub mod linalg;
pub mod montecarlo;
pub mod precoding;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use precoding::Scheme;
pub use scenario::{Scenario, ScenarioConfig};
