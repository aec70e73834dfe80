use ndarray::Array2;
use offload::ot::{
    exact_ot_small, round_to_assignment, OtError, round_with_capacity, sinkhorn, sinkhorn_with_init, transport_cost, CostMatrix,
    DiscreteMeasure, SinkhornParams, TransportPlan,
};
use proptest::prelude::*;

fn cost_from(n: usize, m: usize, v: &[f64]) -> CostMatrix {
    CostMatrix::new(Array2::from_shape_vec((n, m), v[..n * m].to_vec()).unwrap()).unwrap()
}

fn params(epsilon: f64, tol: f64) -> SinkhornParams {
    SinkhornParams {
        epsilon,
        tol,
        max_iter: 200_000,
    }
}

/// The converged plan, or the best plan of a run that hit `max_iter`.
fn solve_any(a: &DiscreteMeasure, b: &DiscreteMeasure, c: &CostMatrix, p: &SinkhornParams) -> TransportPlan {
    match sinkhorn(a, b, c, p) {
        Ok(plan) => plan,
        Err(OtError::NotConverged(plan)) => *plan,
        Err(e) => panic!("{e}"),
    }
}

/// L1 marginal error recomputed from the coupling alone.
fn l1_error(plan: &TransportPlan, a: &[f64], b: &[f64]) -> f64 {
    let rows: f64 = plan.coupling.rows().into_iter().zip(a).map(|(r, x)| (r.sum() - x).abs()).sum();
    let cols: f64 = plan.coupling.columns().into_iter().zip(b).map(|(c, y)| (c.sum() - y).abs()).sum();
    rows.max(cols)
}

/// Smallest ⟨C, P⟩ over permutation couplings, by direct recursion.
fn brute_force_assignment(c: &Array2<f64>) -> f64 {
    fn go(c: &Array2<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        let n = c.nrows();
        if row == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                go(c, row + 1, used, acc + c[[row, j]], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(c, 0, &mut vec![false; c.nrows()], 0.0, &mut best);
    best / c.nrows() as f64
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, usize, Vec<f64>)> {
    (1usize..25, 1usize..8).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(0.05f64..1.0, m),
            Just(n),
            Just(m),
            prop::collection::vec(0.0f64..1.0, n * m),
        )
    })
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

#[test]
fn two_by_two_anti_diagonal_cost() {
    let a = DiscreteMeasure::uniform(2).unwrap();
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let plan = sinkhorn(&a, &a, &c, &SinkhornParams::new(0.01)).unwrap();
    assert!(plan.coupling[[0, 1]] < 1e-10 && plan.coupling[[1, 0]] < 1e-10);
    let (exact, opt) = exact_ot_small(&a, &a, &c).unwrap();
    assert_eq!(opt, 0.0);
    assert_eq!(round_to_assignment(&exact).unwrap(), vec![0, 1]);
}

#[test]
fn transport_cost_examples() {
    let c = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let plan = |rows: Vec<f64>| TransportPlan {
        coupling: Array2::from_shape_vec((2, 2), rows).unwrap(),
        log_u: ndarray::Array1::zeros(2),
        log_v: ndarray::Array1::zeros(2),
        iterations: 0,
        marginal_error: 0.0,
    };
    assert_eq!(transport_cost(&plan(vec![0.5, 0.0, 0.0, 0.5]), &c).unwrap(), 0.0);
    // Product coupling a ⊗ b with a = (0.3, 0.7), b = (0.6, 0.4).
    let p = plan(vec![0.18, 0.12, 0.42, 0.28]);
    assert!((transport_cost(&p, &c).unwrap() - (0.12 + 0.42)).abs() < 1e-15);
}

#[test]
fn rounding_examples() {
    let plan = |rows: usize, v: Vec<f64>| TransportPlan {
        coupling: Array2::from_shape_vec((rows, v.len() / rows), v.clone()).unwrap(),
        log_u: ndarray::Array1::zeros(rows),
        log_v: ndarray::Array1::zeros(v.len() / rows),
        iterations: 0,
        marginal_error: 0.0,
    };
    assert_eq!(round_to_assignment(&plan(1, vec![0.3, 0.3, 0.4])).unwrap(), vec![2]);
    assert_eq!(round_to_assignment(&plan(1, vec![0.5, 0.5])).unwrap(), vec![0]);
    assert_eq!(round_to_assignment(&plan(3, vec![0.3, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.4])).unwrap(), vec![0, 1, 2]);
    assert!(round_to_assignment(&plan(2, vec![0.5, 0.5, 0.0, 0.0])).is_err());
    // Two equal columns each carrying half the mass split the rows evenly.
    let even = plan(4, vec![0.125; 8]);
    assert_eq!(round_to_assignment(&even).unwrap(), vec![0, 0, 0, 0]);
    assert_eq!(round_with_capacity(&even).unwrap(), vec![0, 0, 1, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn converged_plans_are_feasible_and_positive((a, b, n, m, c) in instance()) {
        let (a, b) = (normalized(&a), normalized(&b));
        let cost = cost_from(n, m, &c);
        let plan = sinkhorn(
            &DiscreteMeasure::new(a.clone()).unwrap(),
            &DiscreteMeasure::new(b.clone()).unwrap(),
            &cost,
            &params(0.05 * cost.max().max(1e-3), 1e-6),
        ).unwrap();
        prop_assert!(plan.marginal_error <= 1e-6);
        prop_assert!(l1_error(&plan, &a, &b) <= 1e-6 + 1e-12);
        prop_assert!(plan.coupling.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn plan_does_not_depend_on_initialization(
        (a, b, n, m, c) in instance(),
        init in prop::collection::vec(0.01f64..100.0, 8),
    ) {
        let am = DiscreteMeasure::new(normalized(&a)).unwrap();
        let bm = DiscreteMeasure::new(normalized(&b)).unwrap();
        let cost = cost_from(n, m, &c);
        let p = params(0.1 * cost.max().max(1e-3), 1e-10);
        let x = sinkhorn(&am, &bm, &cost, &p).unwrap();
        let y = sinkhorn_with_init(&am, &bm, &cost, &p, &init[..m]).unwrap();
        let diff = (&x.coupling - &y.coupling).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        prop_assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn cost_does_not_increase_as_epsilon_shrinks((a, b, n, m, c) in instance()) {
        let am = DiscreteMeasure::new(normalized(&a)).unwrap();
        let bm = DiscreteMeasure::new(normalized(&b)).unwrap();
        let cost = cost_from(n, m, &c);
        let max = cost.max().max(1e-3);
        let mut last = f64::INFINITY;
        let mut last_err = 0.0;
        for f in [1.0, 0.1, 0.01] {
            let plan = solve_any(&am, &bm, &cost, &params(f * max, 1e-11));
            let v = transport_cost(&plan, &cost).unwrap();
            // A plan off its marginals by δ in L1 can be off in cost by δ·max(C).
            let slack = 1e-9 + (plan.marginal_error + last_err) * max;
            prop_assert!(v <= last + slack, "{v} > {last} at {f}");
            last = v;
            last_err = plan.marginal_error;
        }
    }

    #[test]
    fn joint_scaling_leaves_coupling_unchanged(
        (a, b, n, m, c) in instance(),
        k in 0.01f64..100.0,
    ) {
        let am = DiscreteMeasure::new(normalized(&a)).unwrap();
        let bm = DiscreteMeasure::new(normalized(&b)).unwrap();
        let cost = cost_from(n, m, &c);
        let eps = 0.1 * cost.max().max(1e-3);
        let x = sinkhorn(&am, &bm, &cost, &params(eps, 1e-12)).unwrap();
        let y = sinkhorn(&am, &bm, &cost.scaled(k).unwrap(), &params(eps * k, 1e-12)).unwrap();
        let diff = (&x.coupling - &y.coupling).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        prop_assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn uniform_square_sinkhorn_is_close_to_exact(n in 2usize..=6, c in prop::collection::vec(0.0f64..1.0, 36)) {
        let u = DiscreteMeasure::uniform(n).unwrap();
        let cost = cost_from(n, n, &c);
        let (_, exact) = exact_ot_small(&u, &u, &cost).unwrap();
        let brute = brute_force_assignment(cost.entries());
        prop_assert!((exact - brute).abs() < 1e-12);
        let plan = solve_any(&u, &u, &cost, &params(0.01 * cost.max(), 1e-9));
        let got = transport_cost(&plan, &cost).unwrap();
        let slack = 1e-9 + plan.marginal_error * cost.max();
        prop_assert!(got >= exact - slack);
        // Entropic bias is at most ε·ln(n²).
        prop_assert!(got <= exact + 0.01 * cost.max() * ((n * n) as f64).ln() + slack);
    }

    #[test]
    fn simplex_optimum_bounds_entropic_cost((a, b, n, m, c) in instance()) {
        prop_assume!(n <= 8 && m <= 8);
        let (a, b) = (normalized(&a), normalized(&b));
        let am = DiscreteMeasure::new(a.clone()).unwrap();
        let bm = DiscreteMeasure::new(b.clone()).unwrap();
        let cost = cost_from(n, m, &c);
        let (plan, opt) = exact_ot_small(&am, &bm, &cost).unwrap();
        prop_assert!(plan.coupling.iter().all(|&p| p >= -1e-12));
        prop_assert!(l1_error(&plan, &a, &b) < 1e-9);
        prop_assert!((transport_cost(&plan, &cost).unwrap() - opt).abs() < 1e-12);
        let eps = 0.01 * cost.max().max(1e-3);
        let sk = solve_any(&am, &bm, &cost, &params(eps, 1e-10));
        let got = transport_cost(&sk, &cost).unwrap();
        let slack = 1e-9 + sk.marginal_error * cost.max();
        prop_assert!(got >= opt - slack, "{got} < {opt}");
        prop_assert!(got <= opt + eps * ((n * m) as f64).ln() + slack, "{got} vs {opt}");
    }
}
