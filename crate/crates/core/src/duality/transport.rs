//! Transportation simplex (MODI / u-v method) with dual extraction.

use std::collections::VecDeque;

/// Consecutive zero-step pivots before switching to Bland's rule.
const STALL_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    /// Row-major `rows × cols` plan.
    pub plan: Vec<f64>,
    /// Row potentials.
    pub u: Vec<f64>,
    /// Column potentials.
    pub v: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub optimal: bool,
}

/// Minimizes `Σ cost[i][j] x[i][j]` over plans with row sums `supply` and
/// column sums `demand` (which must have equal totals). At optimality the
/// potentials satisfy `u_i + v_j <= cost[i][j]` with equality on the basis.
pub fn solve_transport(cost: &[f64], supply: &[f64], demand: &[f64], max_iter: usize) -> TransportSolution {
    let rows = supply.len();
    let cols = demand.len();
    assert!(rows > 0 && cols > 0, "empty transportation problem");
    assert_eq!(cost.len(), rows * cols, "cost matrix shape");

    let mut plan = vec![0.0; rows * cols];
    let mut basic = vec![false; rows * cols];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(rows + cols - 1);

    // Northwest corner start; exhausted rows and columns leave degenerate zeros.
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let x = a[i].min(b[j]).max(0.0);
        plan[i * cols + j] = x;
        basic[i * cols + j] = true;
        basis.push((i, j));
        a[i] -= x;
        b[j] -= x;
        if i == rows - 1 && j == cols - 1 {
            break;
        }
        if j == cols - 1 || (i < rows - 1 && a[i] <= b[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = 1.0 + cost.iter().fold(0.0f64, |s, c| s.max(c.abs()));
    let tol = 1e-12 * scale;
    let mut u = vec![0.0; rows];
    let mut v = vec![0.0; cols];
    let mut iterations = 0;
    let mut stalled = 0;
    let mut optimal = false;

    while iterations < max_iter {
        potentials(cost, cols, rows, &basis, &mut u, &mut v);

        let bland = stalled >= STALL_LIMIT;
        let mut entering: Option<(usize, f64)> = None;
        for (flat, &c) in cost.iter().enumerate() {
            if basic[flat] {
                continue;
            }
            let rc = c - u[flat / cols] - v[flat % cols];
            if rc < -tol && entering.is_none_or(|(_, best)| rc < best) {
                entering = Some((flat, rc));
                if bland {
                    break;
                }
            }
        }
        let Some((enter, _)) = entering else {
            optimal = true;
            break;
        };
        iterations += 1;
        let (p, q) = (enter / cols, enter % cols);

        // Alternating cycle through the basis tree from column q back to row p.
        let path = tree_path(rows, cols, &basis, p, q);
        let mut theta = f64::INFINITY;
        let mut leave: Option<usize> = None;
        for (k, &edge) in path.iter().enumerate() {
            if k % 2 == 0 {
                let (r, c) = basis[edge];
                let x = plan[r * cols + c];
                let better = x < theta
                    || (x == theta && leave.is_some_and(|l| {
                        let (lr, lc) = basis[l];
                        r * cols + c < lr * cols + lc
                    }));
                if better {
                    theta = x;
                    leave = Some(edge);
                }
            }
        }
        let leave = leave.expect("cycle has a decreasing edge");
        let theta = theta.max(0.0);
        for (k, &edge) in path.iter().enumerate() {
            let (r, c) = basis[edge];
            if k % 2 == 0 {
                plan[r * cols + c] -= theta;
            } else {
                plan[r * cols + c] += theta;
            }
        }
        plan[enter] = theta;
        let (lr, lc) = basis[leave];
        plan[lr * cols + lc] = 0.0;
        basic[lr * cols + lc] = false;
        basic[enter] = true;
        basis[leave] = (p, q);
        stalled = if theta > 0.0 { 0 } else { stalled + 1 };
    }
    if !optimal {
        potentials(cost, cols, rows, &basis, &mut u, &mut v);
    }
    for x in &mut plan {
        *x = x.max(0.0);
    }
    let total = plan.iter().zip(cost).map(|(x, c)| x * c).sum();
    TransportSolution { plan, u, v, cost: total, iterations, optimal }
}

/// Solves `u_i + v_j = c_ij` on the basis tree with `u_0 = 0`.
fn potentials(cost: &[f64], cols: usize, rows: usize, basis: &[(usize, usize)], u: &mut [f64], v: &mut [f64]) {
    let adj = adjacency(rows, cols, basis);
    let mut seen = vec![false; rows + cols];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    u[0] = 0.0;
    while let Some(node) = queue.pop_front() {
        for &edge in &adj[node] {
            let (r, c) = basis[edge];
            let other = if node < rows { rows + c } else { r };
            if seen[other] {
                continue;
            }
            seen[other] = true;
            if other >= rows {
                v[c] = cost[r * cols + c] - u[r];
            } else {
                u[r] = cost[r * cols + c] - v[c];
            }
            queue.push_back(other);
        }
    }
}

fn adjacency(rows: usize, cols: usize, basis: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); rows + cols];
    for (e, &(r, c)) in basis.iter().enumerate() {
        adj[r].push(e);
        adj[rows + c].push(e);
    }
    adj
}

/// Basis edges on the tree path from column node `q` to row node `p`,
/// starting at the edge touching `q`.
fn tree_path(rows: usize, cols: usize, basis: &[(usize, usize)], p: usize, q: usize) -> Vec<usize> {
    let adj = adjacency(rows, cols, basis);
    let mut parent: Vec<Option<usize>> = vec![None; rows + cols];
    let mut seen = vec![false; rows + cols];
    let mut queue = VecDeque::from([p]);
    seen[p] = true;
    let target = rows + q;
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        for &edge in &adj[node] {
            let (r, c) = basis[edge];
            let other = if node < rows { rows + c } else { r };
            if !seen[other] {
                seen[other] = true;
                parent[other] = Some(edge);
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != p {
        let edge = parent[node].expect("basis is a spanning tree");
        path.push(edge);
        let (r, c) = basis[edge];
        node = if node >= rows { r } else { rows + c };
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn classic_instance() {
        // Supplies 20/30/25, demands 10/25/40; optimum 775 from an external LP solver.
        let cost = [8.0, 6.0, 10.0, 9.0, 12.0, 13.0, 14.0, 9.0, 16.0];
        let sol = solve_transport(&cost, &[20.0, 30.0, 25.0], &[10.0, 25.0, 40.0], 1000);
        assert!(sol.optimal);
        let dual: f64 = [20.0, 30.0, 25.0].iter().zip(&sol.u).map(|(a, u)| a * u).sum::<f64>()
            + [10.0, 25.0, 40.0].iter().zip(&sol.v).map(|(b, v)| b * v).sum::<f64>();
        assert_abs_diff_eq!(sol.cost, dual, epsilon = 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                assert!(sol.u[i] + sol.v[j] <= cost[i * 3 + j] + 1e-9);
            }
        }
        assert_abs_diff_eq!(sol.cost, 775.0, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_identity_marginals() {
        let n = 6;
        let cost: Vec<f64> = (0..n * n).map(|k| ((k * 7) % 11) as f64).collect();
        let mass = vec![1.0 / n as f64; n];
        let sol = solve_transport(&cost, &mass, &mass, 10_000);
        assert!(sol.optimal);
        for (row, target) in sol.plan.chunks(n).zip(&mass) {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), *target, epsilon = 1e-14);
        }
    }
}
