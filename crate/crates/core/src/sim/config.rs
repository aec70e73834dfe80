use serde::Deserialize;
use thiserror::Error;

use crate::model::{dbm_to_watts, ChannelModel, NodeClass, NodeProfile};
use crate::seed::{self, stream};
use crate::strategies::StrategyParams;
use rand::Rng;

/// Scenario constants. Defaults reproduce the reference parameter table
/// (1/10/100 GHz, 1000/200/50 cycles per bit, 0.5/0.1/0.15/0.2/0.3 W,
/// 50 channels of 50 MHz, 1 Gbit/s fiber, 100 devices).
pub mod defaults {
    pub const NUM_DEVICES: usize = 100;
    pub const DESK_NUM_DEVICES: usize = 20;
    pub const NUM_EDGES: usize = 3;
    pub const SLOT_LENGTH: f64 = 0.1;
    pub const NUM_SLOTS: u64 = 1000;
    pub const ARRIVAL_RATE: f64 = 1.0;
    pub const DATA_SIZE_MIN_KB: u32 = 1;
    pub const DATA_SIZE_MAX_KB: u32 = 500;
    pub const DEADLINE_S: f64 = 1.0;
    pub const ENERGY_BUDGET_J: f64 = 0.5;

    pub const DEVICE_CAPACITY_HZ: f64 = 1e9;
    pub const DEVICE_CYCLES_PER_BIT: f64 = 1000.0;
    pub const DEVICE_COMPUTE_POWER_W: f64 = 0.5;
    pub const DEVICE_UPLOAD_POWER_W: f64 = 0.1;
    pub const DEVICE_DOWNLOAD_POWER_W: f64 = 0.15;

    pub const EDGE_CAPACITY_HZ: f64 = 10e9;
    pub const EDGE_CYCLES_PER_BIT: f64 = 200.0;
    pub const EDGE_UPLOAD_POWER_W: f64 = 0.2;
    pub const EDGE_DOWNLOAD_POWER_W: f64 = 0.3;

    pub const CLOUD_CAPACITY_HZ: f64 = 100e9;
    pub const CLOUD_CYCLES_PER_BIT: f64 = 50.0;

    pub const NUM_CHANNELS: usize = 50;
    pub const BANDWIDTH_HZ: f64 = 50e6;
    pub const NOISE_DBM: f64 = -100.0;
    pub const GAIN_MIN: f64 = 1e-7;
    pub const GAIN_MAX: f64 = 1e-5;
    pub const FIBER_RATE_BPS: f64 = 1e9;
    pub const FIBER_LATENCY_S: f64 = 0.015;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// Poisson(λ) tasks per device per slot.
    Poisson,
    /// Exactly `⌊(s+1)λ⌋ − ⌊sλ⌋` tasks per device in slot `s`.
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub num_devices: usize,
    pub num_edges: usize,
    /// Seconds.
    pub slot_length: f64,
    pub num_slots: u64,
    /// Tasks per slot per device.
    pub arrival_rate: f64,
    pub arrival_process: ArrivalProcess,
    /// Kilobits, inclusive.
    pub data_size_min: u32,
    pub data_size_max: u32,
    pub seed: u64,
    pub deadline: f64,
    pub energy_budget: f64,

    pub device_capacity: f64,
    pub device_cycles_per_bit: f64,
    pub device_compute_power: f64,
    pub device_upload_power: f64,
    pub device_download_power: f64,
    pub edge_capacity: f64,
    pub edge_cycles_per_bit: f64,
    pub edge_upload_power: f64,
    pub edge_download_power: f64,
    pub cloud_capacity: f64,
    pub cloud_cycles_per_bit: f64,

    pub bandwidth: f64,
    pub num_channels: usize,
    pub noise_dbm: f64,
    pub gain_min: f64,
    pub gain_max: f64,
    pub fiber_rate: f64,
    pub fiber_latency: f64,

    #[serde(skip)]
    pub params: StrategyParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        use defaults::*;
        Self {
            num_devices: NUM_DEVICES,
            num_edges: NUM_EDGES,
            slot_length: SLOT_LENGTH,
            num_slots: NUM_SLOTS,
            arrival_rate: ARRIVAL_RATE,
            arrival_process: ArrivalProcess::Poisson,
            data_size_min: DATA_SIZE_MIN_KB,
            data_size_max: DATA_SIZE_MAX_KB,
            seed: 0,
            deadline: DEADLINE_S,
            energy_budget: ENERGY_BUDGET_J,
            device_capacity: DEVICE_CAPACITY_HZ,
            device_cycles_per_bit: DEVICE_CYCLES_PER_BIT,
            device_compute_power: DEVICE_COMPUTE_POWER_W,
            device_upload_power: DEVICE_UPLOAD_POWER_W,
            device_download_power: DEVICE_DOWNLOAD_POWER_W,
            edge_capacity: EDGE_CAPACITY_HZ,
            edge_cycles_per_bit: EDGE_CYCLES_PER_BIT,
            edge_upload_power: EDGE_UPLOAD_POWER_W,
            edge_download_power: EDGE_DOWNLOAD_POWER_W,
            cloud_capacity: CLOUD_CAPACITY_HZ,
            cloud_cycles_per_bit: CLOUD_CYCLES_PER_BIT,
            bandwidth: BANDWIDTH_HZ,
            num_channels: NUM_CHANNELS,
            noise_dbm: NOISE_DBM,
            gain_min: GAIN_MIN,
            gain_max: GAIN_MAX,
            fiber_rate: FIBER_RATE_BPS,
            fiber_latency: FIBER_LATENCY_S,
            params: StrategyParams::default(),
        }
    }
}

/// A configuration value outside its allowed range.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{key}: {message}")]
pub struct ConfigError {
    pub key: &'static str,
    pub message: String,
}

fn check(ok: bool, key: &'static str, message: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError {
            key,
            message: message.into(),
        })
    }
}

impl SimConfig {
    /// The reduced scenario used for quick sweeps: 20 devices, 3 edges.
    pub fn desk_scale() -> Self {
        Self {
            num_devices: defaults::DESK_NUM_DEVICES,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        check(self.num_devices > 0, "num_devices", "must be at least 1")?;
        check(pos(self.slot_length), "slot_length", "must be positive")?;
        check(self.num_slots > 0, "num_slots", "must be at least 1")?;
        check(
            self.arrival_rate.is_finite() && self.arrival_rate >= 0.0,
            "arrival_rate",
            format!("must be nonnegative, got {}", self.arrival_rate),
        )?;
        check(self.data_size_min >= 1, "data_size_min", "must be at least 1 kilobit")?;
        check(
            self.data_size_min <= self.data_size_max,
            "data_size_max",
            "must not be below data_size_min",
        )?;
        check(pos(self.deadline), "deadline", "must be positive")?;
        check(pos(self.energy_budget), "energy_budget", "must be positive")?;
        check(pos(self.device_capacity), "device_capacity", "must be positive")?;
        check(pos(self.device_cycles_per_bit), "device_cycles_per_bit", "must be positive")?;
        check(pos(self.edge_capacity), "edge_capacity", "must be positive")?;
        check(pos(self.edge_cycles_per_bit), "edge_cycles_per_bit", "must be positive")?;
        check(pos(self.cloud_capacity), "cloud_capacity", "must be positive")?;
        check(pos(self.cloud_cycles_per_bit), "cloud_cycles_per_bit", "must be positive")?;
        check(self.device_compute_power >= 0.0, "device_compute_power", "must be nonnegative")?;
        check(self.device_upload_power >= 0.0, "device_upload_power", "must be nonnegative")?;
        check(pos(self.bandwidth), "bandwidth", "must be positive")?;
        check(self.num_channels > 0, "num_channels", "must be at least 1")?;
        check(self.noise_dbm.is_finite(), "noise_dbm", "must be finite")?;
        check(pos(self.gain_min), "gain_min", "must be positive")?;
        check(self.gain_min <= self.gain_max && self.gain_max.is_finite(), "gain_max", "must not be below gain_min")?;
        check(pos(self.fiber_rate), "fiber_rate", "must be positive")?;
        check(
            self.fiber_latency.is_finite() && self.fiber_latency >= 0.0,
            "fiber_latency",
            "must be nonnegative",
        )?;
        let p = &self.params;
        check((0.0..=1.0).contains(&p.gamma1), "gamma1", "must lie in [0, 1]")?;
        check(p.epsilon.map_or(true, pos), "epsilon", "must be positive")?;
        check(pos(p.epsilon_scale), "epsilon_scale", "must be positive")?;
        check(pos(p.tol), "tol", "must be positive")?;
        check(p.max_iter > 0, "max_iter", "must be at least 1")?;
        check(p.capacity_horizon.map_or(true, pos), "capacity_horizon", "must be positive")?;
        Ok(())
    }

    pub fn cloud_id(&self) -> usize {
        self.num_devices + self.num_edges
    }

    /// Devices `0..D`, edges `D..D+E`, then the cloud.
    pub fn node_profiles(&self) -> Vec<NodeProfile> {
        let mut nodes = Vec::with_capacity(self.num_devices + self.num_edges + 1);
        for id in 0..self.num_devices {
            nodes.push(NodeProfile {
                id,
                class: NodeClass::Device,
                compute_capacity: self.device_capacity,
                cycles_per_bit: self.device_cycles_per_bit,
                compute_power: self.device_compute_power,
                upload_power: self.device_upload_power,
                download_power: self.device_download_power,
            });
        }
        for e in 0..self.num_edges {
            nodes.push(NodeProfile {
                id: self.num_devices + e,
                class: NodeClass::Edge,
                compute_capacity: self.edge_capacity,
                cycles_per_bit: self.edge_cycles_per_bit,
                compute_power: 0.0,
                upload_power: self.edge_upload_power,
                download_power: self.edge_download_power,
            });
        }
        nodes.push(NodeProfile {
            id: self.cloud_id(),
            class: NodeClass::Cloud,
            compute_capacity: self.cloud_capacity,
            cycles_per_bit: self.cloud_cycles_per_bit,
            compute_power: 0.0,
            upload_power: 0.0,
            download_power: 0.0,
        });
        nodes
    }

    /// Channel with per-device gains drawn log-uniformly from
    /// `[gain_min, gain_max]` under this config's seed.
    pub fn channel(&self) -> ChannelModel {
        let mut rng = seed::rng(self.seed, &[stream::GAINS]);
        let (lo, hi) = (self.gain_min.ln(), self.gain_max.ln());
        let channel_gain = (0..self.num_devices)
            .map(|_| if hi > lo { rng.gen_range(lo..hi).exp() } else { self.gain_min })
            .collect();
        ChannelModel {
            bandwidth: self.bandwidth,
            num_channels: self.num_channels,
            noise_power: dbm_to_watts(self.noise_dbm),
            tx_power: vec![self.device_upload_power; self.num_devices],
            channel_gain,
            fiber_rate: self.fiber_rate,
            fiber_latency: self.fiber_latency,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        SimConfig::desk_scale().validate().unwrap();
    }

    #[test]
    fn range_errors_name_the_key() {
        let bad = SimConfig {
            arrival_rate: -1.0,
            ..SimConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().key, "arrival_rate");
        let bad = SimConfig {
            data_size_min: 10,
            data_size_max: 5,
            ..SimConfig::default()
        };
        assert_eq!(bad.validate().unwrap_err().key, "data_size_max");
    }

    #[test]
    fn layout_has_one_cloud_last() {
        let c = SimConfig::desk_scale();
        let nodes = c.node_profiles();
        assert_eq!(nodes.len(), 24);
        assert_eq!(nodes.iter().filter(|n| n.class == NodeClass::Cloud).count(), 1);
        assert_eq!(nodes[c.cloud_id()].class, NodeClass::Cloud);
        assert!(nodes.iter().enumerate().all(|(i, n)| n.id == i));
    }

    #[test]
    fn gains_are_seeded_and_in_range() {
        let c = SimConfig::desk_scale();
        let g1 = c.channel().channel_gain;
        assert_eq!(g1, c.channel().channel_gain);
        assert!(g1.iter().all(|g| (1e-7..=1e-5).contains(g)));
        let other = SimConfig { seed: 1, ..c.clone() }.channel().channel_gain;
        assert_ne!(g1, other);
        assert!((c.channel().noise_power - 1e-13).abs() < 1e-25);
    }
}
