use rayon::prelude::*;

use super::config::SimConfig;
use super::engine::{run, SimError, SimMetrics};
use crate::seed::replicate_seed;
use crate::strategies::StrategyKind;

/// One cell of a sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub arrival_rate: f64,
    pub strategy: StrategyKind,
    /// Replicate seed as given on the grid, before derivation.
    pub seed: u64,
    pub metrics: SimMetrics,
}

/// Configuration of a single grid cell. The run seed depends only on the
/// base seed and the replicate, never on the cell's position in the grid.
pub fn cell_config(base: &SimConfig, arrival_rate: f64, seed: u64) -> SimConfig {
    SimConfig {
        arrival_rate,
        seed: replicate_seed(base.seed, seed),
        ..base.clone()
    }
}

/// Runs the Cartesian product rates × strategies × seeds. Cells run in
/// parallel on the current rayon pool; rows come back rate-major, then
/// strategy, then seed, regardless of completion order.
pub fn sweep(
    base: &SimConfig,
    rates: &[f64],
    strategies: &[StrategyKind],
    seeds: &[u64],
) -> Result<Vec<SweepRow>, SimError> {
    let cells: Vec<(f64, StrategyKind, u64)> = rates
        .iter()
        .flat_map(|&r| strategies.iter().flat_map(move |&s| seeds.iter().map(move |&k| (r, s, k))))
        .collect();
    cells
        .into_par_iter()
        .map(|(rate, strategy, seed)| {
            let metrics = run(&cell_config(base, rate, seed), strategy)?;
            Ok(SweepRow {
                arrival_rate: rate,
                strategy,
                seed,
                metrics,
            })
        })
        .collect()
}
