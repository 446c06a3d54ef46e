//! Simulation and numerical verification for Dawson–Watanabe
//! superprocesses: heat-kernel oracles, uniform Brownian trees, moment
//! densities, a branching Brownian particle engine with ancestor
//! bookkeeping, and hitting/Palm experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod moments;
pub mod palm;
pub mod par;
pub mod point_process;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod sim;
pub mod stats;
pub mod tree;

pub use error::{Error, Result};
pub use kernels::{DiscreteMeasure, Point, PointTuple};
pub use stats::{EstimateWithError, Method, RunningStats};
