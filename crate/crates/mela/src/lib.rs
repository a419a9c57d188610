//! Multi-expert policy synthesis on a planar pendulum.
//!
//! Expert MLPs are fused in parameter space by a gating network, co-trained
//! with soft actor-critic plus a torque-smoothing loss, and exercised on a
//! deterministic two-link pendulum with recovery, rhythmic, and
//! goal-tracking task analogs. A mixture baseline that blends expert
//! outputs instead of parameters trains under the same protocol for
//! comparison.

pub mod analysis;
pub mod autodiff;
pub mod batched;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod reward;
pub mod sac;
pub mod fusion;
pub mod nets;
pub mod pipeline;

pub use error::{Error, Result};
