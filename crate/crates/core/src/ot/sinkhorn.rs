//! Log-domain Sinkhorn iterations.
//!
//! The coupling has the diagonal-scaling form `P = diag(u) K diag(v)` with
//! kernel `K = exp(-C/ε)`. The iterations alternate `u ← a ⊘ Kv` and
//! `v ← b ⊘ Kᵀu`, carried out on `log u`, `log v` with log-sum-exp so that
//! kernels far below the f64 range still produce a usable plan.

use ndarray::{Array1, Array2};

use super::{check_shapes, CostMatrix, DiscreteMeasure, OtError, Result, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub epsilon: f64,
    /// Stop once `max(‖P1 − a‖₁, ‖Pᵀ1 − b‖₁) ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl SinkhornParams {
    pub const DEFAULT_TOL: f64 = 1e-6;
    pub const DEFAULT_MAX_ITER: usize = 10_000;

    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
        }
    }
}

/// Solves the entropic problem starting from `v = 1`.
pub fn sinkhorn(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: &CostMatrix, params: &SinkhornParams) -> Result<TransportPlan> {
    let zeros = vec![0.0; b.len()];
    solve(a, b, cost, params, &zeros)
}

/// Solves the entropic problem starting from the given positive column
/// scaling `init_v`. The first half-step recomputes `u`, so only `v` needs
/// a starting point.
pub fn sinkhorn_with_init(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostMatrix,
    params: &SinkhornParams,
    init_v: &[f64],
) -> Result<TransportPlan> {
    if init_v.len() != b.len() {
        return Err(OtError::ShapeMismatch {
            expected: (1, b.len()),
            found: (1, init_v.len()),
        });
    }
    if init_v.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(OtError::InvalidMeasure("initial scaling must be positive".into()));
    }
    let log_v: Vec<f64> = init_v.iter().map(|v| v.ln()).collect();
    solve(a, b, cost, params, &log_v)
}

#[inline]
fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Alternating log-domain half-steps on `C/ε = scaled` until the row error
/// is within `tol` or `budget` sweeps are spent. Returns the sweeps used and
/// the final row error.
#[allow(clippy::too_many_arguments)]
fn iterate(
    scaled: &[f64],
    (n, m): (usize, usize),
    a: &[f64],
    log_a: &[f64],
    log_b: &[f64],
    f: &mut [f64],
    g: &mut [f64],
    tol: f64,
    budget: usize,
) -> (usize, f64) {
    let mut row_lse = vec![0.0; n];
    let mut iterations = 0;
    loop {
        for i in 0..n {
            let row = &scaled[i * m..(i + 1) * m];
            row_lse[i] = logsumexp(g.iter().zip(row).map(|(gj, c)| gj - c));
        }
        // Columns are exact after the g half-step; only rows can be off.
        let row_err: f64 = (0..n).map(|i| ((f[i] + row_lse[i]).exp() - a[i]).abs()).sum();
        if (iterations > 0 && row_err <= tol) || iterations >= budget {
            return (iterations, row_err);
        }
        for i in 0..n {
            f[i] = log_a[i] - row_lse[i];
        }
        for j in 0..m {
            let lse = logsumexp((0..n).map(|i| f[i] - scaled[i * m + j]));
            g[j] = log_b[j] - lse;
        }
        iterations += 1;
    }
}

/// Regularization schedule: halve from the cost range down to `eps`. Small
/// ε on its own converges very slowly from a cold start; each stage hands
/// its dual potentials to the next, and the last stage solves the requested
/// problem, whose optimum is unique.
fn schedule(cost: &CostMatrix, eps: f64) -> Vec<f64> {
    let c = cost.entries();
    let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = cost.max() - lo;
    let mut stages = Vec::new();
    let mut e = range / 2.0;
    while e > 2.0 * eps {
        stages.push(e);
        e /= 2.0;
    }
    stages.push(eps);
    stages
}

/// Loose tolerance for intermediate stages; only the last one must be exact.
const STAGE_TOL: f64 = 1e-3;

fn solve(
    a: &DiscreteMeasure,
    b: &DiscreteMeasure,
    cost: &CostMatrix,
    params: &SinkhornParams,
    init_log_v: &[f64],
) -> Result<TransportPlan> {
    check_shapes(a, b, cost)?;
    let eps = params.epsilon;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(OtError::InvalidEpsilon(eps));
    }
    let (n, m) = cost.shape();
    let log_a: Vec<f64> = a.weights().iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.weights().iter().map(|w| w.ln()).collect();

    let stages = schedule(cost, eps);
    let mut f = vec![0.0; n];
    // Potentials are carried as ε·log-scaling between stages.
    let mut g: Vec<f64> = init_log_v.iter().map(|v| v * eps / stages[0]).collect();
    let mut prev = stages[0];
    let mut iterations = 0;
    let mut scaled = Vec::new();
    for (k, &e) in stages.iter().enumerate() {
        let last = k + 1 == stages.len();
        for x in f.iter_mut().chain(g.iter_mut()) {
            *x *= prev / e;
        }
        prev = e;
        scaled = cost.entries().iter().map(|c| c / e).collect();
        let tol = if last { params.tol } else { params.tol.max(STAGE_TOL) };
        let left = params.max_iter.saturating_sub(iterations);
        // A stuck warm-up stage must not starve the final one.
        let budget = if last { left } else { left / (2 * (stages.len() - k)) };
        let (used, _) = iterate(&scaled, (n, m), a.weights(), &log_a, &log_b, &mut f, &mut g, tol, budget);
        iterations += used;
    }

    let coupling = Array2::from_shape_fn((n, m), |(i, j)| {
        let p = (f[i] + g[j] - scaled[i * m + j]).exp();
        if p.is_finite() {
            p
        } else {
            0.0
        }
    });
    let mut plan = TransportPlan {
        coupling,
        log_u: Array1::from(f),
        log_v: Array1::from(g),
        iterations,
        marginal_error: 0.0,
    };
    plan.marginal_error = plan.marginal_error_against(a, b);
    if plan.marginal_error <= params.tol {
        Ok(plan)
    } else {
        Err(OtError::NotConverged(Box::new(plan)))
    }
}
