//! Scale-free regulated state synchronization for homogeneous linear
//! multi-agent systems with unknown, nonuniform input delays.
//!
//! The crate designs the per-agent protocol from the agent model and a delay
//! bound only ([`protocol::design`]), checks the frequency-domain delay
//! condition, assembles the delayed closed loop of a concrete network and
//! integrates it ([`dde`]). The [`harness`] module wraps all of it behind
//! scenario files and a CLI.

// NaN must fail every range check, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dde;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod riccati;
pub mod topology;

pub use error::{Error, Result};
pub use model::AgentModel;
pub use topology::Topology;
