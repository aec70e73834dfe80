//! Domain types and the closed-form communication/computation formulas.
//!
//! Every time/energy helper here is a pure function of its inputs. Required
//! cycles are never stored on a [`Task`]; they are derived per target node as
//! `data bits × node.cycles_per_bit`, because device, edge and cloud each
//! quote a different cycles-per-bit figure.

use thiserror::Error;

/// Index of a node in a scenario's node table.
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown device id {0}")]
    UnknownDevice(usize),
    #[error("device {0} cannot interfere with itself")]
    SelfInterference(usize),
    #[error("expected a {expected:?} node, got {found:?} (node {id})")]
    WrongClass {
        id: NodeId,
        expected: NodeClass,
        found: NodeClass,
    },
    #[error("link rate is zero; target unreachable this slot")]
    InfeasibleLink,
    #[error("concurrent cloud offloader count must be at least 1")]
    NoOffloaders,
    #[error("gamma1 must lie in [0, 1], got {0}")]
    InvalidGamma(f64),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeClass {
    Device,
    Edge,
    Cloud,
}

/// One offloading request.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u64,
    /// Input data in kilobits.
    pub data_size: f64,
    /// Maximum allowable delay, seconds.
    pub deadline: f64,
    /// Maximum allowable device energy, joules.
    pub energy_budget: f64,
    pub origin_device: NodeId,
    pub created_slot: u64,
}

impl Task {
    pub fn bits(&self) -> f64 {
        self.data_size * 1e3
    }

    /// Cycles this task needs when executed on `node`.
    pub fn cycles_on(&self, node: &NodeProfile) -> f64 {
        self.bits() * node.cycles_per_bit
    }
}

/// Static capability of a device, edge server, or the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub id: NodeId,
    pub class: NodeClass,
    /// Cycles per second.
    pub compute_capacity: f64,
    pub cycles_per_bit: f64,
    /// Watts drawn while computing (devices only).
    pub compute_power: f64,
    pub upload_power: f64,
    pub download_power: f64,
}

impl NodeProfile {
    /// Seconds needed to execute `cycles` on this node.
    pub fn seconds_for(&self, cycles: f64) -> f64 {
        cycles / self.compute_capacity
    }

    fn expect_class(&self, expected: NodeClass) -> Result<()> {
        if self.class == expected {
            Ok(())
        } else {
            Err(ModelError::WrongClass {
                id: self.id,
                expected,
                found: self.class,
            })
        }
    }
}

/// Wireless access and fiber backhaul parameters.
///
/// `tx_power` and `channel_gain` are indexed by device id. Devices share one
/// of `num_channels` orthogonal channels; only devices on the same channel
/// interfere with each other.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Hz.
    pub bandwidth: f64,
    pub num_channels: usize,
    /// Watts.
    pub noise_power: f64,
    pub tx_power: Vec<f64>,
    pub channel_gain: Vec<f64>,
    /// Bits per second from base station to cloud.
    pub fiber_rate: f64,
    /// Fixed propagation latency of the backhaul, seconds.
    pub fiber_latency: f64,
}

impl ChannelModel {
    pub fn num_devices(&self) -> usize {
        self.tx_power.len()
    }

    pub fn channel_of(&self, device: usize) -> usize {
        device % self.num_channels.max(1)
    }

    fn received_power(&self, device: usize) -> Result<f64> {
        match (self.tx_power.get(device), self.channel_gain.get(device)) {
            (Some(p), Some(h)) => Ok(p * h),
            _ => Err(ModelError::UnknownDevice(device)),
        }
    }

    /// Backhaul upload delay for `bits` of task data.
    pub fn uplink_delay(&self, bits: f64) -> f64 {
        bits / self.fiber_rate + self.fiber_latency
    }
}

/// Time and device energy of one placement.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimeEnergy {
    pub time: f64,
    pub energy: f64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Shannon rate of `user` given the set of simultaneously transmitting
/// `interferers`, in bits per second.
pub fn transmission_rate(channel: &ChannelModel, user: usize, interferers: &[usize]) -> Result<f64> {
    let signal = channel.received_power(user)?;
    let mut interference = 0.0;
    for &m in interferers {
        if m == user {
            return Err(ModelError::SelfInterference(user));
        }
        interference += channel.received_power(m)?;
    }
    let sinr = signal / (channel.noise_power + interference);
    Ok(channel.bandwidth * (1.0 + sinr).log2())
}

pub fn local_time_energy(task: &Task, device: &NodeProfile) -> Result<TimeEnergy> {
    device.expect_class(NodeClass::Device)?;
    let time = device.seconds_for(task.cycles_on(device));
    Ok(TimeEnergy {
        time,
        energy: device.compute_power * time,
    })
}

/// Edge execution: compute on the edge plus the wireless upload.
/// Energy is the device's upload power over the whole placement time.
pub fn edge_time_energy(task: &Task, device: &NodeProfile, edge: &NodeProfile, rate: f64) -> Result<TimeEnergy> {
    edge.expect_class(NodeClass::Edge)?;
    if !(rate > 0.0) {
        return Err(ModelError::InfeasibleLink);
    }
    let time = edge.seconds_for(task.cycles_on(edge)) + task.bits() / rate;
    Ok(TimeEnergy {
        time,
        energy: device.upload_power * time,
    })
}

/// Cloud execution: compute, the wireless term scaled by the number of
/// concurrent offloaders, and the backhaul uplink.
pub fn cloud_time_energy(
    task: &Task,
    device: &NodeProfile,
    cloud: &NodeProfile,
    rate: f64,
    concurrent_offloaders: usize,
    channel: &ChannelModel,
) -> Result<TimeEnergy> {
    cloud.expect_class(NodeClass::Cloud)?;
    if !(rate > 0.0) {
        return Err(ModelError::InfeasibleLink);
    }
    if concurrent_offloaders == 0 {
        return Err(ModelError::NoOffloaders);
    }
    let bits = task.bits();
    let time = cloud.seconds_for(task.cycles_on(cloud))
        + bits / rate * concurrent_offloaders as f64
        + channel.uplink_delay(bits);
    Ok(TimeEnergy {
        time,
        energy: device.upload_power * time,
    })
}

/// Delay/energy blend used to rank placements; lower is better.
pub fn classification_weight(time: f64, energy: f64, gamma1: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma1) {
        return Err(ModelError::InvalidGamma(gamma1));
    }
    Ok(gamma1 * time + (1.0 - gamma1) * energy)
}

/// Inclusive deadline and energy-budget check.
pub fn feasible(task: &Task, time: f64, energy: f64) -> bool {
    time <= task.deadline && energy <= task.energy_budget
}
