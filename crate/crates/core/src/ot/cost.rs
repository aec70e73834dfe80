use ndarray::Array2;

use super::{CostMatrix, OtError, Result};
use crate::model::{feasible, ModelError, Task};
use crate::strategies::{SlotSnapshot, Target};

/// Infeasible placements cost this multiple of the largest feasible entry.
pub const PENALTY_FACTOR: f64 = 10.0;

/// Estimated completion delay of every task on every target, including the
/// target's current backlog. Entries that miss the task's deadline or energy
/// budget, or whose link is down, are replaced by a finite penalty.
pub fn build_cost_matrix(tasks: &[Task], targets: &[Target], snapshot: &SlotSnapshot<'_>) -> Result<CostMatrix> {
    if tasks.is_empty() {
        return Err(OtError::Empty("no tasks to place"));
    }
    if targets.is_empty() {
        return Err(OtError::Empty("no candidate nodes"));
    }
    let (n, m) = (tasks.len(), targets.len());
    // None marks an infeasible entry; the f64 is the raw delay when known.
    let mut raw: Vec<(Option<f64>, bool)> = Vec::with_capacity(n * m);
    for task in tasks {
        for &target in targets {
            match snapshot.estimate(task, target) {
                Ok(te) => raw.push((Some(te.time), feasible(task, te.time, te.energy))),
                Err(ModelError::InfeasibleLink) => raw.push((None, false)),
                Err(e) => return Err(e.into()),
            }
        }
    }

    let max_feasible = raw
        .iter()
        .filter(|(_, ok)| *ok)
        .filter_map(|(t, _)| *t)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))));
    let global_max = raw
        .iter()
        .filter_map(|(t, _)| *t)
        .fold(0.0, f64::max);
    let reference = max_feasible.unwrap_or(global_max);
    let penalty = PENALTY_FACTOR * if reference > 0.0 { reference } else { 1.0 };

    let entries: Vec<f64> = raw
        .into_iter()
        .map(|(t, ok)| match (t, ok) {
            (Some(t), true) => t,
            _ => penalty,
        })
        .collect();
    CostMatrix::new(Array2::from_shape_vec((n, m), entries).expect("n*m entries"))
}
