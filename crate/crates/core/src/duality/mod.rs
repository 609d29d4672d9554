//! Nature's worst-case coupling problem as a transportation LP, and dual
//! certificates that lower-bound a mechanism's worst-case revenue.

mod certificate;
pub mod simplex;
pub mod transport;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{JointError, JointGrid};
use crate::dist::{DiscreteMarginal, DistError, Marginal};
use crate::grid::{flat_index, profile_count, unflatten};
use crate::mech::Mechanism;

pub use certificate::{
    best_response_bound, build_canonical_dual, canonical_dual_value, in_v_plus, verify_dual,
    DualCertificate, DualVerification, DualViolation, CERTIFICATE_TOLERANCE,
};

/// Relative duality-gap tolerance at optimality.
pub const GAP_TOLERANCE: f64 = 1e-7;
/// Marginal masses must sum to one within this.
pub const MARGINAL_TOLERANCE: f64 = 1e-10;

/// Largest grid per bidder count.
pub fn grid_cap(n: usize) -> Option<usize> {
    match n {
        2 => Some(400),
        3 => Some(25),
        4 => Some(12),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Optimal,
    IterationLimit,
    InfeasibleMarginals,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("grid of {m} points exceeds the cap for {n} bidders")]
    SizeCap { n: usize, m: usize },
    #[error("marginal masses sum to {total}, expected 1")]
    InfeasibleMarginals { total: f64 },
    #[error("mechanism has {mech} bidders but {requested} were requested")]
    BidderMismatch { mech: usize, requested: usize },
    #[error("no closed-form certificate for mechanism kind {0}")]
    UnsupportedKind(String),
    #[error("solver stopped: {0}")]
    Solver(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Joint(#[from] JointError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LPResult {
    pub optimal_coupling: JointGrid,
    pub primal_value: f64,
    pub dual: DualCertificate,
    pub gap: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

/// JSON summary of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpSummary {
    pub primal: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub status: LpStatus,
}

impl LPResult {
    pub fn summary(&self) -> LpSummary {
        LpSummary { primal: self.primal_value, dual_value: self.dual.value, gap: self.gap, status: self.status }
    }

    /// Whether the gap meets `GAP_TOLERANCE · (1 + |primal|)`.
    pub fn gap_ok(&self) -> bool {
        self.gap >= -1e-9 && self.gap <= GAP_TOLERANCE * (1.0 + self.primal_value.abs())
    }
}

/// Minimum expected total payment over couplings of `n` copies of `F`
/// restricted to an `m`-point grid (floor binning).
pub fn nature_worst_case(mech: &Mechanism, f: &Marginal, n: usize, m: usize) -> Result<LPResult, LpError> {
    check_cap(n, m)?;
    let d = f.discretize(m)?;
    nature_worst_case_pmf(mech, &d, n)
}

fn check_cap(n: usize, m: usize) -> Result<(), LpError> {
    match grid_cap(n) {
        Some(cap) if m <= cap => Ok(()),
        _ => Err(LpError::SizeCap { n, m }),
    }
}

/// Worst case for an explicit grid marginal.
pub fn nature_worst_case_pmf(mech: &Mechanism, d: &DiscreteMarginal, n: usize) -> Result<LPResult, LpError> {
    if mech.n_bidders() != n {
        return Err(LpError::BidderMismatch { mech: mech.n_bidders(), requested: n });
    }
    check_cap(n, d.grid.len())?;
    let total = d.total();
    if (total - 1.0).abs() > MARGINAL_TOLERANCE || d.pmf.iter().any(|&p| p < 0.0) {
        return Err(LpError::InfeasibleMarginals { total });
    }
    let payments = mech.payment_table(&d.grid);
    if n == 2 {
        solve_two(d, &payments)
    } else {
        solve_many(d, n, &payments)
    }
}

fn support_of(d: &DiscreteMarginal) -> Vec<usize> {
    (0..d.pmf.len()).filter(|&k| d.pmf[k] > 0.0).collect()
}

fn solve_two(d: &DiscreteMarginal, payments: &[f64]) -> Result<LPResult, LpError> {
    let m = d.grid.len();
    let s = support_of(d);
    let k = s.len();
    let mass: Vec<f64> = s.iter().map(|&i| d.pmf[i]).collect();
    let mut cost = Vec::with_capacity(k * k);
    for &i in &s {
        for &j in &s {
            cost.push(payments[i * m + j]);
        }
    }
    let max_iter = 50 * (k + 1) * (k + 1) + 10_000;
    let sol = transport::solve_transport(&cost, &mass, &mass, max_iter);

    let mut dense = vec![0.0; m * m];
    for (a, &i) in s.iter().enumerate() {
        for (b, &j) in s.iter().enumerate() {
            dense[i * m + j] = sol.plan[a * k + b];
        }
    }
    let coupling = JointGrid::from_dense2(d.grid.clone(), dense)?;

    // Extend the potentials to zero-mass nodes as tightly as feasibility allows.
    let mut lam1 = vec![f64::NAN; m];
    let mut lam2 = vec![f64::NAN; m];
    for (a, &i) in s.iter().enumerate() {
        lam1[i] = sol.u[a];
        lam2[i] = sol.v[a];
    }
    for i in 0..m {
        if lam1[i].is_nan() {
            lam1[i] = s.iter().map(|&j| payments[i * m + j] - lam2[j]).fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..m {
        if lam2[j].is_nan() {
            lam2[j] = (0..m).map(|i| payments[i * m + j] - lam1[i]).fold(f64::INFINITY, f64::min);
        }
    }
    let dual = DualCertificate::new(d.grid.clone(), vec![lam1, lam2], &d.pmf);
    let primal = sol.cost;
    let status = if sol.optimal { LpStatus::Optimal } else { LpStatus::IterationLimit };
    Ok(LPResult {
        optimal_coupling: coupling,
        primal_value: primal,
        gap: primal - dual.value,
        dual,
        status,
        iterations: sol.iterations,
    })
}

fn solve_many(d: &DiscreteMarginal, n: usize, payments: &[f64]) -> Result<LPResult, LpError> {
    let m = d.grid.len();
    let s = support_of(d);
    let k = s.len();
    // Row (bidder i, support position a); for bidders after the first the
    // last support node's row is implied by total mass and dropped.
    let row_of = |i: usize, a: usize| -> Option<usize> {
        if i == 0 {
            Some(a)
        } else if a + 1 == k {
            None
        } else {
            Some(k + (i - 1) * (k - 1) + a)
        }
    };
    let rows = k + (n - 1) * (k - 1);
    let mut rhs = vec![0.0; rows];
    for i in 0..n {
        for (a, &node) in s.iter().enumerate() {
            if let Some(r) = row_of(i, a) {
                rhs[r] = d.pmf[node];
            }
        }
    }
    let cells = profile_count(k, n);
    let mut columns = Vec::with_capacity(cells);
    let mut cost = Vec::with_capacity(cells);
    let mut local = vec![0; n];
    let mut global = vec![0; n];
    for flat in 0..cells {
        unflatten(flat, k, &mut local);
        let mut col = Vec::with_capacity(n);
        for (i, &a) in local.iter().enumerate() {
            if let Some(r) = row_of(i, a) {
                col.push((r, 1.0));
            }
            global[i] = s[a];
        }
        columns.push(col);
        cost.push(payments[flat_index(&global, m)]);
    }
    let lp = simplex::SparseLp { rows, columns, cost, rhs };
    let max_iter = 200 * rows + 20 * cells + 10_000;
    let sol = simplex::solve(&lp, max_iter);
    let status = match sol.status {
        simplex::SimplexStatus::Optimal => LpStatus::Optimal,
        simplex::SimplexStatus::IterationLimit => LpStatus::IterationLimit,
        simplex::SimplexStatus::Infeasible => return Err(LpError::InfeasibleMarginals { total: d.total() }),
        simplex::SimplexStatus::Unbounded => return Err(LpError::Solver("unbounded".into())),
    };

    let mut entries = Vec::new();
    for (flat, &x) in sol.x.iter().enumerate() {
        if x > 0.0 {
            unflatten(flat, k, &mut local);
            entries.push((local.iter().map(|&a| s[a]).collect::<Vec<_>>(), x));
        }
    }
    let coupling = JointGrid::from_cells(n, d.grid.clone(), entries)?;

    let mut lambdas = vec![vec![f64::NAN; m]; n];
    for (i, lam) in lambdas.iter_mut().enumerate() {
        for (a, &node) in s.iter().enumerate() {
            lam[node] = row_of(i, a).map_or(0.0, |r| sol.y[r]);
        }
    }
    // Zero-mass nodes: low enough that any profile touching them stays feasible.
    let top = lambdas.iter().flatten().filter(|x| !x.is_nan()).fold(0.0f64, |a, &b| a.max(b));
    let floor = payments.iter().fold(0.0f64, |a, &b| a.min(b)) - (n - 1) as f64 * top;
    for lam in &mut lambdas {
        for x in lam.iter_mut() {
            if x.is_nan() {
                *x = floor;
            }
        }
    }
    let dual = DualCertificate::new(d.grid.clone(), lambdas, &d.pmf);
    let primal = sol.objective;
    Ok(LPResult {
        optimal_coupling: coupling,
        primal_value: primal,
        gap: primal - dual.value,
        dual,
        status,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_mass_has_a_unique_coupling() {
        let f = Marginal::point_mass(0.5).unwrap();
        for n in 2..=3 {
            let mech = Mechanism::spa_beta_reserve(n).unwrap();
            let lp = nature_worst_case(&mech, &f, n, 11).unwrap();
            assert_abs_diff_eq!(lp.primal_value, mech.total_payment(&vec![0.5; n]), epsilon = 1e-14);
            assert!(lp.gap_ok());
        }
    }

    #[test]
    fn caps_are_enforced() {
        let f = Marginal::uniform();
        let mech = Mechanism::spa_plain(3).unwrap();
        assert_eq!(nature_worst_case(&mech, &f, 3, 26).unwrap_err(), LpError::SizeCap { n: 3, m: 26 });
        let five = Mechanism::spa_plain(5).unwrap();
        assert!(nature_worst_case(&five, &f, 5, 3).is_err());
    }

    #[test]
    fn unnormalized_marginals_rejected() {
        let d = DiscreteMarginal { grid: crate::grid::Grid::uniform(4).unwrap(), pmf: vec![0.5, 0.2, 0.2, 0.2] };
        let mech = Mechanism::spa_plain(2).unwrap();
        assert!(matches!(nature_worst_case_pmf(&mech, &d, 2), Err(LpError::InfeasibleMarginals { .. })));
    }

    #[test]
    fn three_bidder_lp_has_tight_duals() {
        let f = Marginal::equal_revenue(0.5).unwrap();
        let mech = Mechanism::spa_beta_reserve(3).unwrap();
        let lp = nature_worst_case(&mech, &f, 3, 9).unwrap();
        assert_eq!(lp.status, LpStatus::Optimal);
        assert!(lp.gap_ok(), "gap {}", lp.gap);
        let d = f.discretize(9).unwrap();
        assert!(lp.optimal_coupling.marginal_error(&d.pmf) < 1e-8);
        let report = verify_dual(&lp.dual, &mech, &d.grid);
        assert!(report.feasible, "{:?}", report.max_violation);
    }

    #[test]
    fn two_bidder_dual_is_feasible_everywhere() {
        let f = Marginal::equal_revenue(0.45).unwrap();
        let mech = Mechanism::spa_uniform_reserve(2).unwrap();
        let lp = nature_worst_case(&mech, &f, 2, 30).unwrap();
        assert!(lp.gap_ok());
        let report = verify_dual(&lp.dual, &mech, lp.optimal_coupling.grid());
        assert!(report.feasible);
    }
}
