//! Discrete optimal transport between pending tasks and compute nodes.
//!
//! A problem is the triple (a, b, C): two [`DiscreteMeasure`]s and a
//! [`CostMatrix`]. [`sinkhorn`] solves the entropy-regularized problem in the
//! log domain and returns a [`TransportPlan`]; [`exact_ot_small`] solves the
//! unregularized linear program exactly for desk-sized instances and serves
//! as the verification oracle. [`round_to_assignment`] turns a fractional
//! coupling into one node per task.

use ndarray::{Array1, Array2};
use thiserror::Error;

mod cost;
mod exact;
mod sinkhorn;

pub use cost::{build_cost_matrix, PENALTY_FACTOR};
pub use exact::{exact_ot_small, permutation_optimum, transportation_simplex, EXACT_MAX_DIM};
pub use sinkhorn::{sinkhorn, sinkhorn_with_init, SinkhornParams};

#[derive(Debug, Error)]
pub enum OtError {
    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid cost entry {value} at ({row}, {col})")]
    InvalidCost { row: usize, col: usize, value: f64 },
    #[error("regularization must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("empty problem: {0}")]
    Empty(&'static str),
    #[error("Sinkhorn stopped after {} iterations with marginal error {}", .0.iterations, .0.marginal_error)]
    NotConverged(Box<TransportPlan>),
    #[error("exact solver limited to {max}x{max}, got {n}x{m}")]
    TooLarge { n: usize, m: usize, max: usize },
    #[error("coupling row {0} carries no mass")]
    EmptyRow(usize),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

pub type Result<T> = std::result::Result<T, OtError>;

/// Tolerance on the total mass of a [`DiscreteMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(OtError::Empty("measure has no support"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(OtError::InvalidMeasure(format!("weight {w} is negative or non-finite")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(OtError::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Normalizes nonnegative masses to a probability vector.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if let Some(w) = masses.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(OtError::InvalidMeasure(format!("mass {w} is negative or non-finite")));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(OtError::InvalidMeasure("total mass is zero".into()));
        }
        Self::new(masses.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OtError::Empty("measure has no support"));
        }
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= MASS_TOLERANCE)
    }
}

/// Nonnegative finite cost per unit of transported mass, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(OtError::Empty("cost matrix has no entries"));
        }
        for ((row, col), &value) in entries.indexed_iter() {
            if !value.is_finite() || value < 0.0 {
                return Err(OtError::InvalidCost { row, col, value });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(OtError::Empty("ragged cost rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let entries = Array2::from_shape_vec((n, m), flat).expect("shape checked above");
        Self::new(entries)
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn median(&self) -> f64 {
        let mut v: Vec<f64> = self.entries.iter().copied().collect();
        v.sort_by(|x, y| x.total_cmp(y));
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.entries * factor)
    }
}

/// A coupling between two measures together with the solver state that
/// produced it.
///
/// The Sinkhorn scalings are kept in log form (`log_u`, `log_v`): for small
/// regularization the plain scalings overflow long before the coupling does.
/// For exact solutions the scalings are zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
    pub log_u: Array1<f64>,
    pub log_v: Array1<f64>,
    pub iterations: usize,
    pub marginal_error: f64,
}

impl TransportPlan {
    pub fn shape(&self) -> (usize, usize) {
        self.coupling.dim()
    }

    /// Row scaling vector `u` (may overflow to infinity for tiny epsilon).
    pub fn scaling_u(&self) -> Array1<f64> {
        self.log_u.mapv(f64::exp)
    }

    pub fn scaling_v(&self) -> Array1<f64> {
        self.log_v.mapv(f64::exp)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.coupling.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        self.coupling.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// `max(‖P1 − a‖₁, ‖Pᵀ1 − b‖₁)` recomputed from the coupling.
    pub fn marginal_error_against(&self, a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
        let rows: f64 = self
            .row_sums()
            .iter()
            .zip(a.weights())
            .map(|(s, w)| (s - w).abs())
            .sum();
        let cols: f64 = self
            .col_sums()
            .iter()
            .zip(b.weights())
            .map(|(s, w)| (s - w).abs())
            .sum();
        rows.max(cols)
    }
}

/// Frobenius inner product `⟨C, P⟩`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    if plan.shape() != cost.shape() {
        return Err(OtError::ShapeMismatch {
            expected: cost.shape(),
            found: plan.shape(),
        });
    }
    Ok(plan
        .coupling
        .iter()
        .zip(cost.entries.iter())
        .map(|(p, c)| p * c)
        .sum())
}

/// Assigns each row to the column holding most of its mass. Ties go to the
/// lowest column index.
pub fn round_to_assignment(plan: &TransportPlan) -> Result<Vec<usize>> {
    plan.coupling
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let mut best: Option<(usize, f64)> = None;
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 && best.map_or(true, |(_, bp)| p > bp) {
                    best = Some((j, p));
                }
            }
            best.map(|(j, _)| j).ok_or(OtError::EmptyRow(i))
        })
        .collect()
}

/// Rounding that respects the plan's column totals.
///
/// Rows are placed largest mass first (ties by index). Each row takes the
/// column with the largest coupling entry among those whose remaining column
/// mass still covers the row's mass, and that column's remaining mass drops
/// by the row's mass. A row that fits nowhere falls back to its plain argmax.
/// Equal columns thus share rows in proportion to what the plan sends them,
/// where [`round_to_assignment`] would send every row to the first of them.
pub fn round_with_capacity(plan: &TransportPlan) -> Result<Vec<usize>> {
    let fallback = round_to_assignment(plan)?;
    let rows = plan.row_sums();
    let mut remaining = plan.col_sums();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&x, &y| rows[y].total_cmp(&rows[x]).then(x.cmp(&y)));
    let mut out = fallback.clone();
    for i in order {
        let need = rows[i] * (1.0 - 1e-9);
        let mut best: Option<(usize, f64)> = None;
        for (j, &p) in plan.coupling.row(i).iter().enumerate() {
            if remaining[j] >= need && p > 0.0 && best.map_or(true, |(_, bp)| p > bp) {
                best = Some((j, p));
            }
        }
        let j = best.map_or(fallback[i], |(j, _)| j);
        remaining[j] -= rows[i];
        out[i] = j;
    }
    Ok(out)
}

pub(crate) fn check_shapes(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: &CostMatrix) -> Result<()> {
    if cost.shape() != (a.len(), b.len()) {
        return Err(OtError::ShapeMismatch {
            expected: (a.len(), b.len()),
            found: cost.shape(),
        });
    }
    Ok(())
}
