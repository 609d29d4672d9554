//! Two-phase revised simplex for `min cᵀx, Ax = b, x >= 0` with sparse
//! columns and a dense basis inverse.

use nalgebra::DMatrix;

const PIVOT_TOLERANCE: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const STALL_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLp {
    pub rows: usize,
    /// Column `j` as `(row, value)` pairs.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Optimal,
    IterationLimit,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub x: Vec<f64>,
    /// Row duals: `cost_j − yᵀA_j >= 0` for every column at optimality.
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: SimplexStatus,
    pub iterations: usize,
}

struct State<'a> {
    lp: &'a SparseLp,
    /// Row sign flips so that the working right-hand side is nonnegative.
    sign: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: DMatrix<f64>,
    xb: Vec<f64>,
    since_refactor: usize,
}

impl<'a> State<'a> {
    fn structural(&self) -> usize {
        self.lp.columns.len()
    }

    /// Column `j` of the sign-adjusted matrix; indices past the structural
    /// columns are artificials.
    fn column(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.structural() {
            self.lp.columns[j].iter().map(|&(r, a)| (r, a * self.sign[r])).collect()
        } else {
            vec![(j - self.structural(), 1.0)]
        }
    }

    /// `yᵀA_j` without materializing the column.
    fn priced(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.structural() {
            self.lp.columns[j].iter().map(|&(r, a)| y[r] * a * self.sign[r]).sum()
        } else {
            y[j - self.structural()]
        }
    }

    fn duals(&self, cost: &dyn Fn(usize) -> f64) -> Vec<f64> {
        let m = self.lp.rows;
        let mut y = vec![0.0; m];
        for (r, &var) in self.basis.iter().enumerate() {
            let c = cost(var);
            if c != 0.0 {
                for (col, yc) in y.iter_mut().enumerate() {
                    *yc += c * self.binv[(r, col)];
                }
            }
        }
        y
    }

    fn direction(&self, j: usize) -> Vec<f64> {
        let m = self.lp.rows;
        let mut w = vec![0.0; m];
        for (row, a) in self.column(j) {
            for (r, wr) in w.iter_mut().enumerate() {
                *wr += a * self.binv[(r, row)];
            }
        }
        w
    }

    fn pivot(&mut self, leave_row: usize, enter: usize, w: &[f64]) {
        let m = self.lp.rows;
        let pivot = w[leave_row];
        for c in 0..m {
            self.binv[(leave_row, c)] /= pivot;
        }
        for (r, &wr) in w.iter().enumerate() {
            if r != leave_row && wr != 0.0 {
                for c in 0..m {
                    let delta = wr * self.binv[(leave_row, c)];
                    self.binv[(r, c)] -= delta;
                }
            }
        }
        self.is_basic[self.basis[leave_row]] = false;
        self.is_basic[enter] = true;
        self.basis[leave_row] = enter;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        } else {
            self.recompute_xb();
        }
    }

    fn refactor(&mut self) {
        let m = self.lp.rows;
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (r, &var) in self.basis.iter().enumerate() {
            for (row, a) in self.column(var) {
                b[(row, r)] = a;
            }
        }
        if let Some(inv) = b.try_inverse() {
            self.binv = inv;
        }
        self.since_refactor = 0;
        self.recompute_xb();
    }

    fn recompute_xb(&mut self) {
        let m = self.lp.rows;
        for r in 0..m {
            let mut acc = 0.0;
            for c in 0..m {
                acc += self.binv[(r, c)] * self.rhs[c];
            }
            self.xb[r] = acc.max(0.0);
        }
    }

    /// Runs simplex iterations for the given cost function until optimal.
    fn run(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        eligible: &dyn Fn(usize) -> bool,
        budget: &mut usize,
        iterations: &mut usize,
    ) -> SimplexStatus {
        let total = self.structural() + self.lp.rows;
        let scale = 1.0 + (0..self.structural()).map(|j| cost(j).abs()).fold(0.0, f64::max);
        let tol = 1e-11 * scale;
        let mut stalled = 0;
        loop {
            if *budget == 0 {
                return SimplexStatus::IterationLimit;
            }
            let y = self.duals(cost);
            let bland = stalled >= STALL_LIMIT;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                if self.is_basic[j] || !eligible(j) {
                    continue;
                }
                let rc = cost(j) - self.priced(j, &y);
                if rc < -tol && entering.is_none_or(|(_, best)| rc < best) {
                    entering = Some((j, rc));
                    if bland {
                        break;
                    }
                }
            }
            let Some((enter, _)) = entering else {
                return SimplexStatus::Optimal;
            };
            let w = self.direction(enter);
            let mut leave: Option<(usize, f64)> = None;
            for (r, &wr) in w.iter().enumerate() {
                if wr > PIVOT_TOLERANCE {
                    let t = self.xb[r] / wr;
                    let better = match leave {
                        None => true,
                        Some((lr, lt)) => {
                            if bland {
                                t < lt - 1e-15 || (t <= lt + 1e-15 && self.basis[r] < self.basis[lr])
                            } else {
                                t < lt - 1e-15 || (t <= lt + 1e-15 && wr > w[lr])
                            }
                        }
                    };
                    if better {
                        leave = Some((r, t));
                    }
                }
            }
            let Some((leave_row, step)) = leave else {
                return SimplexStatus::Unbounded;
            };
            self.pivot(leave_row, enter, &w);
            *budget -= 1;
            *iterations += 1;
            stalled = if step > 1e-15 { 0 } else { stalled + 1 };
        }
    }
}

pub fn solve(lp: &SparseLp, max_iter: usize) -> SimplexSolution {
    let m = lp.rows;
    let n = lp.columns.len();
    let sign: Vec<f64> = lp.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
    let rhs: Vec<f64> = lp.rhs.iter().zip(&sign).map(|(b, s)| b * s).collect();
    let mut is_basic = vec![false; n + m];
    for flag in &mut is_basic[n..] {
        *flag = true;
    }
    let mut state = State {
        lp,
        sign: sign.clone(),
        xb: rhs.clone(),
        rhs,
        basis: (n..n + m).collect(),
        is_basic,
        binv: DMatrix::identity(m, m),
        since_refactor: 0,
    };

    let mut budget = max_iter;
    let mut iterations = 0;
    let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    let all = |_: usize| true;
    let status = state.run(&phase1_cost, &all, &mut budget, &mut iterations);
    let infeasibility: f64 =
        state.basis.iter().zip(&state.xb).filter(|(&v, _)| v >= n).map(|(_, &x)| x).sum();
    let rhs_scale = 1.0 + state.rhs.iter().map(|b| b.abs()).sum::<f64>();
    if status != SimplexStatus::Optimal || infeasibility > 1e-9 * rhs_scale {
        let status = if status == SimplexStatus::IterationLimit {
            SimplexStatus::IterationLimit
        } else {
            SimplexStatus::Infeasible
        };
        return finish(&state, status, iterations, &|j| if j < n { lp.cost[j] } else { 0.0 });
    }

    // Pivot remaining zero-level artificials out where a structural column allows it.
    for r in 0..m {
        if state.basis[r] < n {
            continue;
        }
        let row: Vec<f64> = (0..m).map(|c| state.binv[(r, c)]).collect();
        let candidate = (0..n).find(|&j| {
            !state.is_basic[j]
                && state.column(j).iter().map(|&(row_j, a)| a * row[row_j]).sum::<f64>().abs() > 1e-7
        });
        if let Some(j) = candidate {
            let w = state.direction(j);
            state.pivot(r, j, &w);
        }
    }

    let phase2_cost = |j: usize| if j < n { lp.cost[j] } else { 0.0 };
    let structural_only = |j: usize| j < n;
    let status = state.run(&phase2_cost, &structural_only, &mut budget, &mut iterations);
    finish(&state, status, iterations, &phase2_cost)
}

fn finish(state: &State, status: SimplexStatus, iterations: usize, cost: &dyn Fn(usize) -> f64) -> SimplexSolution {
    let n = state.structural();
    let mut x = vec![0.0; n];
    for (r, &var) in state.basis.iter().enumerate() {
        if var < n {
            x[var] = state.xb[r];
        }
    }
    let y_signed = state.duals(cost);
    let y = y_signed.iter().zip(&state.sign).map(|(y, s)| y * s).collect();
    let objective = x.iter().zip(&state.lp.cost).map(|(a, c)| a * c).sum();
    SimplexSolution { x, y, objective, status, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_lp_with_duals() {
        // min -x1 - 2x2  s.t. x1 + x2 + s1 = 4, x1 + 3x2 + s2 = 6.
        let lp = SparseLp {
            rows: 2,
            columns: vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (1, 3.0)], vec![(0, 1.0)], vec![(1, 1.0)]],
            cost: vec![-1.0, -2.0, 0.0, 0.0],
            rhs: vec![4.0, 6.0],
        };
        let sol = solve(&lp, 100);
        assert_eq!(sol.status, SimplexStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, -5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sol.x[1], 1.0, epsilon = 1e-12);
        let dual: f64 = sol.y.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        assert_abs_diff_eq!(dual, -5.0, epsilon = 1e-12);
    }

    #[test]
    fn detects_infeasibility() {
        // x1 = 1 and x1 = 2.
        let lp = SparseLp {
            rows: 2,
            columns: vec![vec![(0, 1.0), (1, 1.0)]],
            cost: vec![1.0],
            rhs: vec![1.0, 2.0],
        };
        assert_eq!(solve(&lp, 100).status, SimplexStatus::Infeasible);
    }

    #[test]
    fn negative_rhs_rows_are_flipped() {
        // min x1 + x2 s.t. -x1 - x2 = -3, x1 - x2 + s = 1.
        let lp = SparseLp {
            rows: 2,
            columns: vec![vec![(0, -1.0), (1, 1.0)], vec![(0, -1.0), (1, -1.0)], vec![(1, 1.0)]],
            cost: vec![1.0, 1.0, 0.0],
            rhs: vec![-3.0, 1.0],
        };
        let sol = solve(&lp, 100);
        assert_eq!(sol.status, SimplexStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = 1e-12);
        let dual: f64 = sol.y.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        assert_abs_diff_eq!(dual, 3.0, epsilon = 1e-12);
    }
}
