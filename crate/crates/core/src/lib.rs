//! Cooperative emitter localization from Doppler curves observed by a fleet
//! of UAVs.
//!
//! The pipeline per window: [`channel`] synthesizes what each UAV receives,
//! [`dfs`] estimates the Doppler shift, [`sdf`] inverts a history of shifts
//! into a position, [`fusion`] combines the fleet's estimates and [`sim`]
//! drives the whole thing over a [`scenario`]. [`cli`] wraps it as a tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod dfs;
pub mod fusion;
pub mod scenario;
pub mod sdf;
pub mod sim;

pub use channel::{ChannelParams, ReceivedWindow};
pub use dfs::{DopplerSample, EstimatorMode};
pub use fusion::{FusedEstimate, FusionRule, LinkClass, NodeReport};
pub use scenario::{Condition, LocalFrame, Scenario, Vec3};
pub use sdf::{LocalEstimate, SdfSolver};
pub use sim::{run_simulation, run_sweep, SimResult};
