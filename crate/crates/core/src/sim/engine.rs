use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::arrivals::generate_arrivals;
use super::config::{ConfigError, SimConfig};
use crate::model::{
    cloud_time_energy, edge_time_energy, local_time_energy, transmission_rate, ChannelModel, ModelError, NodeClass,
    NodeId, NodeProfile, Task,
};
use crate::seed::{self, stream};
use crate::strategies::{decide, NodeSnapshot, SlotSnapshot, StrategyError, StrategyKind};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("task {task} assigned to node {node}, which is not one of its candidates")]
    BadAssignment { task: u64, node: NodeId },
    #[error("task {0} left unassigned")]
    Unassigned(u64),
}

/// Relative slack when comparing cycle counts.
const CYCLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Job {
    task: Task,
    remaining_cycles: f64,
    transmit_delay: f64,
    energy: f64,
    started: bool,
}

/// Outcome of one finished task.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub task_id: u64,
    pub node: NodeId,
    /// Transmission plus queueing plus compute, seconds.
    pub delay: f64,
    pub energy: f64,
    pub met_deadline: bool,
    pub met_budget: bool,
}

/// Runtime state of one node: a FIFO of admitted work.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub profile: NodeProfile,
    queue: VecDeque<Job>,
    pub backlog_cycles: f64,
    /// Cycles served in each completed slot.
    pub served: Vec<f64>,
}

impl NodeState {
    pub fn new(profile: NodeProfile) -> Self {
        Self {
            profile,
            queue: VecDeque::new(),
            backlog_cycles: 0.0,
            served: Vec::new(),
        }
    }

    fn admit(&mut self, job: Job) {
        self.backlog_cycles += job.remaining_cycles;
        self.queue.push_back(job);
    }

    /// Tasks admitted but not finished, including the one in service.
    pub fn queued_tasks(&self) -> usize {
        self.queue.len()
    }

    /// Data of tasks whose execution has not started, kilobits.
    pub fn waiting_kb(&self) -> f64 {
        self.queue.iter().filter(|j| !j.started).map(|j| j.task.data_size).sum()
    }

    /// Serves up to `capacity × slot_length` cycles FIFO, starting at
    /// `slot_start`.
    fn drain(&mut self, slot_start: f64, slot_length: f64) -> Vec<Completion> {
        let cap = self.profile.compute_capacity;
        let budget = cap * slot_length;
        let mut used = 0.0;
        let mut done = Vec::new();
        while let Some(job) = self.queue.front_mut() {
            let left = budget - used;
            if left <= 0.0 {
                break;
            }
            job.started = true;
            if job.remaining_cycles <= left * (1.0 + CYCLE_TOL) {
                used = (used + job.remaining_cycles).min(budget);
                let finish = slot_start + used / cap;
                let created = job.task.created_slot as f64 * slot_length;
                let delay = job.transmit_delay + (finish - created);
                done.push(Completion {
                    task_id: job.task.id,
                    node: self.profile.id,
                    delay,
                    energy: job.energy,
                    met_deadline: delay <= job.task.deadline,
                    met_budget: job.energy <= job.task.energy_budget,
                });
                self.queue.pop_front();
            } else {
                job.remaining_cycles -= left;
                used = budget;
                break;
            }
        }
        self.backlog_cycles = self.queue.iter().map(|j| j.remaining_cycles).sum();
        self.served.push(used);
        done
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlotRecord {
    pub slot: u64,
    pub arrivals: usize,
    pub offloaded: usize,
    pub completions: Vec<Completion>,
    pub energy: f64,
    /// Waiting data over all nodes after service, kilobits.
    pub blocking_kb: f64,
    pub queued_tasks: usize,
    pub backlog_cycles: f64,
}

/// Aggregates of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimMetrics {
    pub generated_tasks: u64,
    pub completed_tasks: u64,
    /// Mean end-to-end delay of completed tasks; 0 when none completed.
    pub avg_task_delay: f64,
    /// Completed tasks per slot.
    pub processing_rate: f64,
    pub peak_blocking_queue: f64,
    pub final_blocking_queue: f64,
    pub total_energy: f64,
    /// Tasks finished within both deadline and energy budget, over generated.
    pub offload_success_rate: f64,
    pub deadline_misses: u64,
    pub still_queued: u64,
    pub ot_solves: u64,
    pub ot_iterations_mean: f64,
    pub ot_fallback_count: u64,
    /// Conservation, nonnegativity and work-conservation failures observed.
    pub invariant_violations: u64,
}

#[derive(Debug, Default)]
struct Totals {
    generated: u64,
    completed: u64,
    delay_sum: f64,
    successes: u64,
    deadline_misses: u64,
    energy: f64,
    peak_blocking: f64,
    final_blocking: f64,
    ot_solves: u64,
    ot_iterations: u64,
    ot_fallbacks: u64,
    violations: u64,
}

/// One deterministic run of a strategy over a scenario.
pub struct Simulation {
    config: SimConfig,
    strategy: StrategyKind,
    nodes: Vec<NodeState>,
    channel: ChannelModel,
    policy_rng: ChaCha8Rng,
    slot: u64,
    next_task_id: u64,
    last_transmitters: Vec<usize>,
    last_offloads: usize,
    totals: Totals,
}

impl Simulation {
    pub fn new(config: SimConfig, strategy: StrategyKind) -> Result<Self, SimError> {
        config.validate()?;
        let nodes = config.node_profiles().into_iter().map(NodeState::new).collect();
        let channel = config.channel();
        let policy_rng = seed::rng(config.seed, &[stream::POLICY]);
        Ok(Self {
            config,
            strategy,
            nodes,
            channel,
            policy_rng,
            slot: 0,
            next_task_id: 0,
            last_transmitters: Vec::new(),
            last_offloads: 0,
            totals: Totals::default(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Arrivals, decision, admission, service, accounting for one slot.
    pub fn step(&mut self) -> Result<SlotRecord, SimError> {
        let slot = self.slot;
        let tasks = generate_arrivals(&self.config, slot, self.next_task_id);
        self.next_task_id += tasks.len() as u64;
        self.totals.generated += tasks.len() as u64;

        let snapshot = SlotSnapshot {
            pending_tasks: tasks,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeSnapshot {
                    profile: n.profile.clone(),
                    backlog_cycles: n.backlog_cycles,
                })
                .collect(),
            channel: &self.channel,
            active_offloaders: self.last_offloads,
            transmitting_devices: self.last_transmitters.clone(),
            slot_length: self.config.slot_length,
        };
        let decision = decide(self.strategy, &snapshot, &self.config.params, &mut self.policy_rng)?;
        if let Some(ot) = decision.ot {
            self.totals.ot_solves += 1;
            self.totals.ot_iterations += ot.iterations as u64;
            self.totals.ot_fallbacks += u64::from(ot.fell_back);
        }
        let tasks = snapshot.pending_tasks;
        let arrivals = tasks.len();

        let mut placements = Vec::with_capacity(tasks.len());
        for task in &tasks {
            let node = decision.assignment.get(task.id).ok_or(SimError::Unassigned(task.id))?;
            let class = self.nodes.get(node).map(|n| n.profile.class);
            match class {
                Some(NodeClass::Device) if node == task.origin_device => {}
                Some(NodeClass::Edge | NodeClass::Cloud) => {}
                _ => return Err(SimError::BadAssignment { task: task.id, node }),
            }
            placements.push(node);
        }

        // Ground-truth link state of this slot.
        let mut transmitters: Vec<usize> = tasks
            .iter()
            .zip(&placements)
            .filter(|(t, &n)| n != t.origin_device)
            .map(|(t, _)| t.origin_device)
            .collect();
        transmitters.sort_unstable();
        transmitters.dedup();
        let offloads = tasks.iter().zip(&placements).filter(|(t, &n)| n != t.origin_device).count();

        let mut energy = 0.0;
        for (task, node) in tasks.into_iter().zip(placements) {
            let (job, node) = self.admission(task, node, &transmitters, offloads)?;
            energy += job.energy;
            self.nodes[node].admit(job);
        }
        self.totals.energy += energy;

        let slot_start = slot as f64 * self.config.slot_length;
        let mut completions = Vec::new();
        for node in &mut self.nodes {
            let before = node.backlog_cycles;
            let capacity = node.profile.compute_capacity * self.config.slot_length;
            completions.extend(node.drain(slot_start, self.config.slot_length));
            let served = *node.served.last().expect("pushed by drain");
            let expected = before.min(capacity);
            if (served - expected).abs() > CYCLE_TOL * capacity.max(1.0) || node.backlog_cycles < 0.0 {
                self.totals.violations += 1;
            }
        }
        for c in &completions {
            self.totals.completed += 1;
            self.totals.delay_sum += c.delay;
            if c.met_deadline && c.met_budget {
                self.totals.successes += 1;
            }
            if !c.met_deadline {
                self.totals.deadline_misses += 1;
            }
        }

        let queued_tasks: usize = self.nodes.iter().map(NodeState::queued_tasks).sum();
        if self.totals.generated != self.totals.completed + queued_tasks as u64 {
            self.totals.violations += 1;
        }
        let blocking_kb: f64 = self.nodes.iter().map(NodeState::waiting_kb).sum();
        self.totals.peak_blocking = self.totals.peak_blocking.max(blocking_kb);
        self.totals.final_blocking = blocking_kb;

        self.last_transmitters = transmitters;
        self.last_offloads = offloads;
        self.slot += 1;
        Ok(SlotRecord {
            slot,
            arrivals,
            offloaded: offloads,
            completions,
            energy,
            blocking_kb,
            queued_tasks,
            backlog_cycles: self.nodes.iter().map(|n| n.backlog_cycles).sum(),
        })
    }

    /// Transmission delay, device energy and cycle demand of `task` on
    /// `node`, plus the node that actually receives it.
    fn admission(
        &self,
        task: Task,
        node: NodeId,
        transmitters: &[usize],
        offloads: usize,
    ) -> Result<(Job, NodeId), SimError> {
        let origin = &self.nodes[task.origin_device].profile;
        let target = &self.nodes[node].profile;
        let local = |task: Task| -> Result<(Job, NodeId), SimError> {
            let te = local_time_energy(&task, origin)?;
            let id = task.origin_device;
            Ok((
                Job {
                    remaining_cycles: task.cycles_on(origin),
                    transmit_delay: 0.0,
                    energy: te.energy,
                    started: false,
                    task,
                },
                id,
            ))
        };
        if node == task.origin_device {
            return local(task);
        }
        let device = task.origin_device;
        let ch = self.channel.channel_of(device);
        let interferers: Vec<usize> = transmitters
            .iter()
            .copied()
            .filter(|&d| d != device && self.channel.channel_of(d) == ch)
            .collect();
        let rate = transmission_rate(&self.channel, device, &interferers)?;
        let compute = target.seconds_for(task.cycles_on(target));
        let te = match target.class {
            NodeClass::Edge => edge_time_energy(&task, origin, target, rate),
            NodeClass::Cloud => cloud_time_energy(&task, origin, target, rate, offloads.max(1), &self.channel),
            NodeClass::Device => unreachable!("validated by caller"),
        };
        match te {
            Ok(te) => Ok((
                Job {
                    remaining_cycles: task.cycles_on(target),
                    transmit_delay: te.time - compute,
                    energy: te.energy,
                    started: false,
                    task,
                },
                node,
            )),
            // A dead link leaves the task on its device.
            Err(ModelError::InfeasibleLink) => local(task),
            Err(e) => Err(e.into()),
        }
    }

    pub fn metrics(&self) -> SimMetrics {
        let t = &self.totals;
        let per = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
        SimMetrics {
            generated_tasks: t.generated,
            completed_tasks: t.completed,
            avg_task_delay: per(t.delay_sum, t.completed),
            processing_rate: per(t.completed as f64, self.slot),
            peak_blocking_queue: t.peak_blocking,
            final_blocking_queue: t.final_blocking,
            total_energy: t.energy,
            offload_success_rate: per(t.successes as f64, t.generated),
            deadline_misses: t.deadline_misses,
            still_queued: self.nodes.iter().map(|n| n.queued_tasks() as u64).sum(),
            ot_solves: t.ot_solves,
            ot_iterations_mean: per(t.ot_iterations as f64, t.ot_solves),
            ot_fallback_count: t.ot_fallbacks,
            invariant_violations: t.violations,
        }
    }
}

/// Runs `config.num_slots` slots from empty queues.
pub fn run(config: &SimConfig, strategy: StrategyKind) -> Result<SimMetrics, SimError> {
    let mut sim = Simulation::new(config.clone(), strategy)?;
    for _ in 0..config.num_slots {
        sim.step()?;
    }
    Ok(sim.metrics())
}
