//! Exact Kantorovich optimum for small instances.
//!
//! Uniform square instances are solved by enumerating permutation couplings
//! (an optimal vertex of the Birkhoff polytope is a scaled permutation).
//! Everything else goes through the transportation simplex: a north-west
//! corner start followed by potential-based pivots with Bland's rule.

use ndarray::{Array1, Array2};

use super::{check_shapes, CostMatrix, DiscreteMeasure, OtError, Result, TransportPlan};

pub const EXACT_MAX_DIM: usize = 8;

const PIVOT_LIMIT: usize = 100_000;
const REDUCED_COST_TOL: f64 = 1e-12;

/// Returns an optimal coupling and its cost `⟨C, P⟩`.
pub fn exact_ot_small(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: &CostMatrix) -> Result<(TransportPlan, f64)> {
    check_shapes(a, b, cost)?;
    let (n, m) = cost.shape();
    if n > EXACT_MAX_DIM || m > EXACT_MAX_DIM {
        return Err(OtError::TooLarge {
            n,
            m,
            max: EXACT_MAX_DIM,
        });
    }
    if n == m && a.is_uniform() && b.is_uniform() {
        Ok(permutation_optimum(cost))
    } else {
        Ok(transportation_simplex(a, b, cost))
    }
}

fn plan_from(coupling: Array2<f64>) -> TransportPlan {
    let (n, m) = coupling.dim();
    TransportPlan {
        coupling,
        log_u: Array1::zeros(n),
        log_v: Array1::zeros(m),
        iterations: 0,
        marginal_error: 0.0,
    }
}

/// Minimum over all `n!` permutation couplings with mass `1/n` per cell.
pub fn permutation_optimum(cost: &CostMatrix) -> (TransportPlan, f64) {
    let (n, m) = cost.shape();
    assert_eq!(n, m, "permutation enumeration needs a square cost");
    let c = cost.entries();
    let mut perm: Vec<usize> = (0..n).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>();
    let mut best = perm.clone();
    let mut best_score = score(&perm);

    // Heap's algorithm, iterative form.
    let mut counters = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let s = score(&perm);
            if s < best_score {
                best_score = s;
                best.clone_from(&perm);
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }

    let mass = 1.0 / n as f64;
    let mut coupling = Array2::zeros((n, n));
    for (row, &col) in best.iter().enumerate() {
        coupling[[row, col]] = mass;
    }
    (plan_from(coupling), best_score * mass)
}

/// Exact LP solution of the transportation problem.
pub fn transportation_simplex(a: &DiscreteMeasure, b: &DiscreteMeasure, cost: &CostMatrix) -> (TransportPlan, f64) {
    let (n, m) = cost.shape();
    let c = cost.entries();
    let mut x = Array2::<f64>::zeros((n, m));
    let mut basic = Array2::<bool>::from_elem((n, m), false);

    // North-west corner: a monotone staircase of exactly n + m - 1 cells,
    // which is always a spanning tree of the row/column bipartite graph.
    let mut supply = a.weights().to_vec();
    let mut demand = b.weights().to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let q = supply[i].min(demand[j]).max(0.0);
        x[[i, j]] = q;
        basic[[i, j]] = true;
        supply[i] -= q;
        demand[j] -= q;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    // Absorb the float residue of the staircase into the final cell.
    x[[n - 1, m - 1]] += supply[n - 1].max(0.0);

    for _ in 0..PIVOT_LIMIT {
        let (u, v) = potentials(&basic, c);
        let entering = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[[i, j]] && c[[i, j]] - u[i] - v[j] < -REDUCED_COST_TOL);
        let Some((ei, ej)) = entering else { break };

        let path = tree_path(&basic, ei, ej);
        // path alternates row, col, ..., col; edges between neighbours.
        let edges: Vec<(usize, usize)> = path
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Node::Row(r), Node::Col(c)) | (Node::Col(c), Node::Row(r)) => (r, c),
                _ => unreachable!("bipartite tree"),
            })
            .collect();
        let k = edges.len();
        let minus: Vec<(usize, usize)> = edges
            .iter()
            .enumerate()
            .filter(|(idx, _)| (k - 1 - idx) % 2 == 0)
            .map(|(_, &e)| e)
            .collect();
        let plus: Vec<(usize, usize)> = edges
            .iter()
            .enumerate()
            .filter(|(idx, _)| (k - 1 - idx) % 2 == 1)
            .map(|(_, &e)| e)
            .collect();

        let leaving = *minus
            .iter()
            .min_by(|p, q| x[[p.0, p.1]].total_cmp(&x[[q.0, q.1]]).then(p.cmp(q)))
            .expect("cycle has a decreasing cell");
        let theta = x[[leaving.0, leaving.1]];
        x[[ei, ej]] += theta;
        for &(r, c) in &plus {
            x[[r, c]] += theta;
        }
        for &(r, c) in &minus {
            x[[r, c]] = (x[[r, c]] - theta).max(0.0);
        }
        basic[[ei, ej]] = true;
        basic[[leaving.0, leaving.1]] = false;
        x[[leaving.0, leaving.1]] = 0.0;
    }

    let total = x.iter().zip(c.iter()).map(|(p, q)| p * q).sum();
    let mut plan = plan_from(x);
    plan.marginal_error = plan.marginal_error_against(a, b);
    (plan, total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Row(usize),
    Col(usize),
}

/// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
fn potentials(basic: &Array2<bool>, c: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = basic.dim();
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; m];
    u[0] = 0.0;
    let mut stack = vec![Node::Row(0)];
    while let Some(node) = stack.pop() {
        match node {
            Node::Row(i) => {
                for j in 0..m {
                    if basic[[i, j]] && v[j].is_nan() {
                        v[j] = c[[i, j]] - u[i];
                        stack.push(Node::Col(j));
                    }
                }
            }
            Node::Col(j) => {
                for i in 0..n {
                    if basic[[i, j]] && u[i].is_nan() {
                        u[i] = c[[i, j]] - v[j];
                        stack.push(Node::Row(i));
                    }
                }
            }
        }
    }
    (u, v)
}

/// Path in the basis tree from row `from` to column `to`.
fn tree_path(basic: &Array2<bool>, from: usize, to: usize) -> Vec<Node> {
    let (n, m) = basic.dim();
    let index = |node: Node| match node {
        Node::Row(i) => i,
        Node::Col(j) => n + j,
    };
    let mut parent: Vec<Option<Node>> = vec![None; n + m];
    let mut seen = vec![false; n + m];
    let mut queue = std::collections::VecDeque::from([Node::Row(from)]);
    seen[index(Node::Row(from))] = true;
    while let Some(node) = queue.pop_front() {
        if node == Node::Col(to) {
            break;
        }
        let neighbours: Vec<Node> = match node {
            Node::Row(i) => (0..m).filter(|&j| basic[[i, j]]).map(Node::Col).collect(),
            Node::Col(j) => (0..n).filter(|&i| basic[[i, j]]).map(Node::Row).collect(),
        };
        for next in neighbours {
            if !seen[index(next)] {
                seen[index(next)] = true;
                parent[index(next)] = Some(node);
                queue.push_back(next);
            }
        }
    }
    let mut path = vec![Node::Col(to)];
    let mut cur = Node::Col(to);
    while let Some(p) = parent[index(cur)] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    debug_assert_eq!(path[0], Node::Row(from));
    path
}
