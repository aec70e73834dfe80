//! Cloud-edge computation offloading driven by entropic optimal transport.
//!
//! - [`model`]: task/node/channel types and the closed-form delay and energy
//!   formulas for local, edge and cloud execution.
//! - [`ot`]: discrete optimal transport (log-domain Sinkhorn, exact oracle).
//! - [`strategies`]: per-slot placement policies, including the transport
//!   policy `cloud-edge` and simple baselines.
//! - [`sim`]: slotted simulator and parameter sweeps.
//! - [`cli`]: scenario files, CSV output, and the `offload-sim` commands.

pub mod cli;
pub mod model;
pub mod ot;
pub mod seed;
pub mod sim;
pub mod strategies;
