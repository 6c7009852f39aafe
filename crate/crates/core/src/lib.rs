//! Pinching-antenna downlink simulation, a bipartite graph attention policy
//! trained without labels to maximize energy efficiency, and the baselines
//! it is compared against.
//!
//! Modules, bottom up:
//!
//! - [`model`]: system configuration, channel, rate, energy efficiency, feasibility.
//! - [`graph`]: the user/antenna bipartite graph and its features.
//! - [`diffkit`]: dense tensors, a reverse-mode tape, layers, Adam, gradient checks.
//! - [`bgat`]: the policy, the MLP and GAT-pool baselines, the loss, checkpoints.
//! - [`sca`]: the fixed-antenna SCA benchmark and a grid oracle.
//! - [`harness`]: datasets, training, evaluation, comparison tables.

pub mod bgat;
pub mod diffkit;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod sca;

pub use error::{Error, Result};
pub use model::{
    check_feasible, energy_efficiency, AntennaPlacement, PowerAllocation, Solution, SystemConfig,
    UserLayout,
};
