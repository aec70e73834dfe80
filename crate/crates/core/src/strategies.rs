//! Per-slot offloading policies.
//!
//! Each policy maps a [`SlotSnapshot`] (the tasks that arrived this slot plus
//! the current node backlogs and channel state) to an [`Assignment`]. The
//! candidate targets of a task are its own device, every edge server, and the
//! cloud, in that order; [`Target::Origin`] stands for "the device the task
//! came from" so one cost matrix column covers local execution for all tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::model::{
    classification_weight, cloud_time_energy, edge_time_energy, local_time_energy, transmission_rate, ChannelModel,
    ModelError, NodeClass, NodeId, NodeProfile, Task, TimeEnergy,
};
use crate::seed;
use crate::ot::{
    build_cost_matrix, round_with_capacity, sinkhorn, CostMatrix, DiscreteMeasure, OtError, SinkhornParams,
    TransportPlan,
};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("no {0:?} node in the scenario")]
    MissingClass(NodeClass),
    #[error("no candidate nodes")]
    NoCandidates,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ot(#[from] OtError),
}

pub type Result<T> = std::result::Result<T, StrategyError>;

/// Capacity floor for a fully backlogged node, as a fraction of total mass.
pub const CAPACITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// The device that generated the task.
    Origin,
    Node(NodeId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSnapshot {
    pub profile: NodeProfile,
    pub backlog_cycles: f64,
}

impl NodeSnapshot {
    pub fn backlog_delay(&self) -> f64 {
        self.profile.seconds_for(self.backlog_cycles)
    }
}

/// Everything a policy may look at when deciding one slot.
#[derive(Debug, Clone)]
pub struct SlotSnapshot<'a> {
    pub pending_tasks: Vec<Task>,
    /// Indexed by node id.
    pub nodes: Vec<NodeSnapshot>,
    pub channel: &'a ChannelModel,
    /// Number of off-device offloads observed in the previous slot.
    pub active_offloaders: usize,
    /// Devices that transmitted in the previous slot.
    pub transmitting_devices: Vec<usize>,
    pub slot_length: f64,
}

impl<'a> SlotSnapshot<'a> {
    pub fn node(&self, id: NodeId) -> &NodeSnapshot {
        &self.nodes[id]
    }

    pub fn nodes_of(&self, class: NodeClass) -> impl Iterator<Item = &NodeSnapshot> {
        self.nodes.iter().filter(move |n| n.profile.class == class)
    }

    pub fn cloud(&self) -> Option<&NodeSnapshot> {
        self.nodes_of(NodeClass::Cloud).next()
    }

    /// Origin, then edges by id, then the cloud.
    pub fn targets(&self) -> Vec<Target> {
        let mut t = vec![Target::Origin];
        t.extend(self.nodes_of(NodeClass::Edge).map(|n| Target::Node(n.profile.id)));
        t.extend(self.nodes_of(NodeClass::Cloud).map(|n| Target::Node(n.profile.id)));
        t
    }

    pub fn resolve(&self, task: &Task, target: Target) -> NodeId {
        match target {
            Target::Origin => task.origin_device,
            Target::Node(id) => id,
        }
    }

    /// Uplink rate of `device`, interfered by last slot's transmitters that
    /// share its channel.
    pub fn uplink_rate(&self, device: usize) -> std::result::Result<f64, ModelError> {
        let ch = self.channel.channel_of(device);
        let interferers: Vec<usize> = self
            .transmitting_devices
            .iter()
            .copied()
            .filter(|&d| d != device && self.channel.channel_of(d) == ch)
            .collect();
        transmission_rate(self.channel, device, &interferers)
    }

    /// Placement time (including the target's backlog delay) and device energy.
    pub fn estimate(&self, task: &Task, target: Target) -> std::result::Result<TimeEnergy, ModelError> {
        self.estimate_with_backlog(task, target, None)
    }

    fn estimate_with_backlog(
        &self,
        task: &Task,
        target: Target,
        backlog: Option<&[f64]>,
    ) -> std::result::Result<TimeEnergy, ModelError> {
        let origin = self
            .nodes
            .get(task.origin_device)
            .ok_or(ModelError::UnknownDevice(task.origin_device))?;
        let id = self.resolve(task, target);
        let node = self.nodes.get(id).ok_or(ModelError::UnknownDevice(id))?;
        let backlog_cycles = backlog.map_or(node.backlog_cycles, |b| b[id]);
        let wait = node.profile.seconds_for(backlog_cycles);
        let base = match node.profile.class {
            NodeClass::Device => {
                if id != task.origin_device {
                    return Err(ModelError::WrongClass {
                        id,
                        expected: NodeClass::Edge,
                        found: NodeClass::Device,
                    });
                }
                local_time_energy(task, &origin.profile)?
            }
            NodeClass::Edge => edge_time_energy(task, &origin.profile, &node.profile, self.uplink_rate(task.origin_device)?)?,
            NodeClass::Cloud => cloud_time_energy(
                task,
                &origin.profile,
                &node.profile,
                self.uplink_rate(task.origin_device)?,
                self.active_offloaders.max(1),
                self.channel,
            )?,
        };
        Ok(TimeEnergy {
            time: base.time + wait,
            energy: base.energy,
        })
    }
}

/// Task id → node id, total over the slot's pending tasks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(pub BTreeMap<u64, NodeId>);

impl Assignment {
    pub fn get(&self, task_id: u64) -> Option<NodeId> {
        self.0.get(&task_id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, NodeId)> + '_ {
        self.0.iter().map(|(&t, &n)| (t, n))
    }
}

impl FromIterator<(u64, NodeId)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (u64, NodeId)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Entropic optimal transport between tasks and node capacity.
    CloudEdge,
    Greedy,
    Local,
    Edge,
    Cloud,
    Random,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::CloudEdge,
        StrategyKind::Greedy,
        StrategyKind::Local,
        StrategyKind::Edge,
        StrategyKind::Cloud,
        StrategyKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::CloudEdge => "cloud-edge",
            StrategyKind::Greedy => "greedy",
            StrategyKind::Local => "local",
            StrategyKind::Edge => "edge",
            StrategyKind::Cloud => "cloud",
            StrategyKind::Random => "random",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// Default capacity horizon as a share of the slot. Offering a node only a
/// short window of work bounds the queueing delay that a slot's batch can
/// build on it; the rest spills to the next-cheapest node.
pub const HORIZON_FRACTION: f64 = 0.2;

/// Tunables shared by the policies.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Delay weight in the delay/energy blend.
    pub gamma1: f64,
    /// Fixed regularization; when absent it is `epsilon_scale × median(C)`.
    pub epsilon: Option<f64>,
    pub epsilon_scale: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Seconds of free node capacity offered to the transport problem;
    /// defaults to [`HORIZON_FRACTION`] of the slot length.
    pub capacity_horizon: Option<f64>,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            gamma1: 0.5,
            epsilon: None,
            epsilon_scale: 0.05,
            tol: SinkhornParams::DEFAULT_TOL,
            max_iter: SinkhornParams::DEFAULT_MAX_ITER,
            capacity_horizon: None,
        }
    }
}

/// Solver bookkeeping for one OT decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OtStats {
    pub iterations: usize,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decision {
    pub assignment: Assignment,
    /// Present when a transport problem was solved this slot.
    pub ot: Option<OtStats>,
}

pub fn decide<R: Rng + ?Sized>(
    kind: StrategyKind,
    snapshot: &SlotSnapshot<'_>,
    params: &StrategyParams,
    rng: &mut R,
) -> Result<Decision> {
    let plain = |assignment| Decision { assignment, ot: None };
    match kind {
        StrategyKind::CloudEdge => decide_ot(snapshot, params),
        StrategyKind::Greedy => decide_greedy(snapshot, params.gamma1).map(plain),
        StrategyKind::Local => decide_fixed(snapshot, NodeClass::Device).map(plain),
        StrategyKind::Edge => decide_fixed(snapshot, NodeClass::Edge).map(plain),
        StrategyKind::Cloud => decide_fixed(snapshot, NodeClass::Cloud).map(plain),
        StrategyKind::Random => decide_random(snapshot, rng).map(plain),
    }
}

/// Marginals of the transport problem, in bits.
///
/// Task mass is its data size. Target mass is the data the target could
/// still process within the capacity horizon: `(capacity × horizon −
/// backlog) / cycles_per_bit`, floored. The origin column pools the free
/// capacity of every device that has a pending task.
pub fn ot_masses(snapshot: &SlotSnapshot<'_>, targets: &[Target], horizon: f64) -> (Vec<f64>, Vec<f64>) {
    let tasks = &snapshot.pending_tasks;
    let demand: Vec<f64> = tasks.iter().map(Task::bits).collect();
    let free_bits = |node: &NodeSnapshot| {
        let p = &node.profile;
        ((p.compute_capacity * horizon - node.backlog_cycles) / p.cycles_per_bit).max(0.0)
    };
    let mut origins: Vec<NodeId> = tasks.iter().map(|t| t.origin_device).collect();
    origins.sort_unstable();
    origins.dedup();
    let mut capacity: Vec<f64> = targets
        .iter()
        .map(|t| match *t {
            Target::Origin => origins.iter().map(|&d| free_bits(snapshot.node(d))).sum(),
            Target::Node(id) => free_bits(snapshot.node(id)),
        })
        .collect();
    let total: f64 = capacity.iter().sum::<f64>() + demand.iter().sum::<f64>();
    for c in &mut capacity {
        *c = c.max(CAPACITY_FLOOR * total);
    }
    (demand, capacity)
}

/// Balanced version of the task/target problem. Surplus capacity is carried
/// by an extra zero-cost row, surplus demand by an extra zero-cost column,
/// so that real tasks still compete for real capacity.
struct BalancedProblem {
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    cost: CostMatrix,
    tasks: usize,
    targets: usize,
}

fn balance(demand: &[f64], capacity: &[f64], cost: &CostMatrix) -> Result<BalancedProblem> {
    let (n, m) = cost.shape();
    let supply: f64 = demand.iter().sum();
    let room: f64 = capacity.iter().sum();
    let mut a = demand.to_vec();
    let mut b = capacity.to_vec();
    let c = cost.entries();
    let entries = if room > supply {
        a.push(room - supply);
        let mut e = c.clone().into_raw_vec();
        e.extend(std::iter::repeat(0.0).take(m));
        ndarray::Array2::from_shape_vec((n + 1, m), e).expect("shape")
    } else if supply > room {
        b.push(supply - room);
        ndarray::Array2::from_shape_fn((n, m + 1), |(i, j)| if j < m { c[[i, j]] } else { 0.0 })
    } else {
        c.clone()
    };
    Ok(BalancedProblem {
        a: DiscreteMeasure::from_masses(&a)?,
        b: DiscreteMeasure::from_masses(&b)?,
        cost: CostMatrix::new(entries)?,
        tasks: n,
        targets: m,
    })
}

fn restrict(plan: &TransportPlan, rows: usize, cols: usize) -> TransportPlan {
    TransportPlan {
        coupling: plan.coupling.slice(ndarray::s![..rows, ..cols]).to_owned(),
        log_u: plan.log_u.slice(ndarray::s![..rows]).to_owned(),
        log_v: plan.log_v.slice(ndarray::s![..cols]).to_owned(),
        iterations: plan.iterations,
        marginal_error: plan.marginal_error,
    }
}

/// Regularization used for a cost matrix under `params`.
pub fn epsilon_for(cost: &CostMatrix, params: &StrategyParams) -> f64 {
    match params.epsilon {
        Some(e) => e,
        None => {
            let median = cost.median();
            let reference = if median > 0.0 { median } else { cost.max().max(1e-12) };
            params.epsilon_scale * reference
        }
    }
}

/// Optimal-transport placement: cost matrix, Sinkhorn, capacity-aware rounding.
/// Falls back to [`decide_greedy`] when Sinkhorn does not converge.
pub fn decide_ot(snapshot: &SlotSnapshot<'_>, params: &StrategyParams) -> Result<Decision> {
    let tasks = &snapshot.pending_tasks;
    if tasks.is_empty() {
        return Ok(Decision::default());
    }
    let targets = snapshot.targets();
    let cost = build_cost_matrix(tasks, &targets, snapshot)?;
    let horizon = params.capacity_horizon.unwrap_or(HORIZON_FRACTION * snapshot.slot_length);
    let (demand, capacity) = ot_masses(snapshot, &targets, horizon);
    let problem = balance(&demand, &capacity, &cost)?;

    let sk = SinkhornParams {
        epsilon: epsilon_for(&cost, params),
        tol: params.tol,
        max_iter: params.max_iter,
    };
    match sinkhorn(&problem.a, &problem.b, &problem.cost, &sk) {
        Ok(plan) => {
            let columns = round_with_capacity(&restrict(&plan, problem.tasks, problem.targets))?;
            let assignment = tasks
                .iter()
                .zip(columns)
                .map(|(task, j)| (task.id, snapshot.resolve(task, targets[j])))
                .collect();
            Ok(Decision {
                assignment,
                ot: Some(OtStats {
                    iterations: plan.iterations,
                    fell_back: false,
                }),
            })
        }
        Err(OtError::NotConverged(plan)) => Ok(Decision {
            assignment: decide_greedy(snapshot, params.gamma1)?,
            ot: Some(OtStats {
                iterations: plan.iterations,
                fell_back: true,
            }),
        }),
        Err(e) => Err(e.into()),
    }
}

/// Sequential minimum-Δ placement in task-id order. Each placement adds the
/// task's cycles to its target's backlog before the next task is ranked.
pub fn decide_greedy(snapshot: &SlotSnapshot<'_>, gamma1: f64) -> Result<Assignment> {
    classification_weight(0.0, 0.0, gamma1)?;
    let mut order: Vec<&Task> = snapshot.pending_tasks.iter().collect();
    order.sort_by_key(|t| t.id);
    let targets = snapshot.targets();
    let mut backlog: Vec<f64> = snapshot.nodes.iter().map(|n| n.backlog_cycles).collect();
    let mut out = Assignment::default();
    for task in order {
        let mut best: Option<(f64, NodeId)> = None;
        for &target in &targets {
            let te = match snapshot.estimate_with_backlog(task, target, Some(&backlog)) {
                Ok(te) => te,
                Err(ModelError::InfeasibleLink) => continue,
                Err(e) => return Err(e.into()),
            };
            let delta = classification_weight(te.time, te.energy, gamma1)?;
            if best.map_or(true, |(d, _)| delta < d) {
                best = Some((delta, snapshot.resolve(task, target)));
            }
        }
        let (_, node) = best.ok_or(StrategyError::NoCandidates)?;
        backlog[node] += task.cycles_on(&snapshot.node(node).profile);
        out.0.insert(task.id, node);
    }
    Ok(out)
}

/// Single-class baselines: own device, least-backlog edge, or the cloud.
pub fn decide_fixed(snapshot: &SlotSnapshot<'_>, class: NodeClass) -> Result<Assignment> {
    let tasks = &snapshot.pending_tasks;
    match class {
        NodeClass::Device => Ok(tasks.iter().map(|t| (t.id, t.origin_device)).collect()),
        NodeClass::Edge | NodeClass::Cloud => {
            let mut best: Option<&NodeSnapshot> = None;
            for n in snapshot.nodes_of(class) {
                if best.map_or(true, |b| n.backlog_cycles < b.backlog_cycles) {
                    best = Some(n);
                }
            }
            let target = best.ok_or(StrategyError::MissingClass(class))?.profile.id;
            Ok(tasks.iter().map(|t| (t.id, target)).collect())
        }
    }
}

/// Uniform choice over {origin} ∪ edges ∪ cloud.
///
/// Exactly one value is drawn from `rng` per call; each task's pick is then
/// hashed from that value, its origin device and its rank among that
/// device's tasks. A slot with extra arrivals therefore leaves the picks of
/// the other tasks unchanged.
pub fn decide_random<R: Rng + ?Sized>(snapshot: &SlotSnapshot<'_>, rng: &mut R) -> Result<Assignment> {
    let key: u64 = rng.gen();
    let targets = snapshot.targets();
    let mut order: Vec<&Task> = snapshot.pending_tasks.iter().collect();
    order.sort_by_key(|t| (t.origin_device, t.id));
    let mut out = Assignment::default();
    let mut rank = 0u64;
    for (i, task) in order.iter().enumerate() {
        rank = if i > 0 && order[i - 1].origin_device == task.origin_device { rank + 1 } else { 0 };
        let mut pick_rng = seed::rng(key, &[task.origin_device as u64, rank]);
        let pick = targets[pick_rng.gen_range(0..targets.len())];
        out.0.insert(task.id, snapshot.resolve(task, pick));
    }
    Ok(out)
}
