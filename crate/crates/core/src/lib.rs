//! Convex combinations of bounded two-layer networks, trained greedily.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod basis;
pub mod capacity;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod greedy;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod ngce;
pub mod optimizer;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
