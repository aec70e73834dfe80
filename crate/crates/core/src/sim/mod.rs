//! Deterministic slotted-time engine.
//!
//! Each slot: arrivals are drawn per device, the strategy places them, every
//! placement is charged its transmission delay and device energy and queued
//! on its node, then every node serves up to `capacity × slot_length` cycles
//! in FIFO order. Tasks missing their deadline still run to completion and
//! count against the success rate.

mod arrivals;
mod config;
mod engine;
mod sweep;

pub use arrivals::generate_arrivals;
pub use config::{defaults, ArrivalProcess, ConfigError, SimConfig};
pub use engine::{run, Completion, NodeState, SimError, SimMetrics, Simulation, SlotRecord};
pub use sweep::{cell_config, sweep, SweepRow};
