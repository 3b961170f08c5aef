//! Cell-free massive MIMO simulation with LMMSE channel estimation under
//! nonorthogonal pilots.
//!
//! The crate covers the whole chain: network and large-scale fading
//! generation ([`netgen`]), pilot books ([`pilots`]), per-AP estimators
//! ([`chest`]), closed-form SINRs and rates ([`perf`]), power control
//! ([`power`]), a Monte Carlo oracle for the closed forms ([`mcval`]) and the
//! experiment runner behind the `cellfree` binary ([`expcli`]).

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chest;
pub mod error;
pub mod expcli;
pub mod mcval;
pub mod netgen;
pub mod perf;
pub mod pilots;
pub mod power;
pub mod rng;
pub mod special;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
