use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{virtual_values, JointGrid};
use crate::dist::{exponent, DiscreteMarginal, Marginal};
use crate::grid::{profile_count, unflatten, Grid};
use crate::mech::{Mechanism, MechanismKind, ReserveSpec};

use super::LpError;

/// Feasibility and tightness tolerance for dual constraints.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-10;

/// Per-bidder dual functions on a grid with the lower bound they certify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub n: usize,
    pub grid: Grid,
    /// `lambdas[i][k]` is `λ_i` at node `k`.
    pub lambdas: Vec<Vec<f64>>,
    /// `Σ_i Σ_k λ_i(x_k) · pmf_k`.
    pub value: f64,
}

impl DualCertificate {
    pub fn new(grid: Grid, lambdas: Vec<Vec<f64>>, pmf: &[f64]) -> Self {
        let value = lambdas
            .iter()
            .map(|lam| lam.iter().zip(pmf).filter(|(_, &p)| p > 0.0).map(|(l, p)| l * p).sum::<f64>())
            .sum();
        Self { n: lambdas.len(), grid, lambdas, value }
    }

    /// The zero certificate.
    pub fn zero(n: usize, grid: Grid) -> Self {
        let m = grid.len();
        Self { n, grid, lambdas: vec![vec![0.0; m]; n], value: 0.0 }
    }

    /// `Σ_i λ_i(v_i)` at an index profile.
    pub fn sum_at(&self, index: &[usize]) -> f64 {
        index.iter().enumerate().map(|(i, &k)| self.lambdas[i][k]).sum()
    }
}

/// `λ(v)` of the closed-form certificate for a beta or capped-beta reserve.
fn canonical_lambda(spec: ReserveSpec, n: usize, v: f64) -> Option<f64> {
    let p = exponent(n);
    let nf = n as f64;
    match spec {
        ReserveSpec::Beta => Some(v.powf(p) / nf),
        ReserveSpec::Capped { r } => Some(if v <= r {
            v.powf(p) / (nf * r.powf(1.0 / (n - 1) as f64))
        } else {
            r / nf
        }),
        _ => None,
    }
}

fn canonical_spec(mech: &Mechanism) -> Result<ReserveSpec, LpError> {
    match mech.kind() {
        MechanismKind::SpaRandomReserve(g) => match g.spec() {
            s @ (ReserveSpec::Beta | ReserveSpec::Capped { .. }) => Ok(s),
            _ => Err(LpError::UnsupportedKind(mech.kind_tag().to_string())),
        },
        _ => Err(LpError::UnsupportedKind(mech.kind_tag().to_string())),
    }
}

/// Closed-form certificate for a second-price auction with a beta or
/// capped-beta random reserve, valued against the grid marginal `d`.
pub fn build_canonical_dual(mech: &Mechanism, d: &DiscreteMarginal) -> Result<DualCertificate, LpError> {
    let spec = canonical_spec(mech)?;
    let n = mech.n_bidders();
    let lam: Vec<f64> =
        d.grid.nodes().iter().map(|&v| canonical_lambda(spec, n, v).expect("supported spec")).collect();
    Ok(DualCertificate::new(d.grid.clone(), vec![lam; n], &d.pmf))
}

/// Value of the closed-form certificate against the continuous marginal.
pub fn canonical_dual_value(mech: &Mechanism, f: &Marginal) -> Result<f64, LpError> {
    let n = mech.n_bidders();
    let p = exponent(n);
    Ok(match canonical_spec(mech)? {
        ReserveSpec::Capped { r } => {
            f.moment_up_to(p, r, true) / r.powf(1.0 / (n - 1) as f64) + r * (1.0 - f.cdf(r))
        }
        _ => f.moment_power(p),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualViolation {
    pub index: Vec<usize>,
    /// `Σ_i t_i − Σ_i λ_i`, negative here.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualVerification {
    pub feasible: bool,
    pub profiles_checked: usize,
    pub violations: Vec<DualViolation>,
    pub max_violation: f64,
    /// Profiles with `|slack| <= CERTIFICATE_TOLERANCE`, lexicographic.
    pub tight: Vec<Vec<usize>>,
    /// Whether the tight set is exactly the grid trace of `V⁺`.
    pub tight_is_v_plus: bool,
}

/// A unique top with all other entries equal, or all entries equal.
pub fn in_v_plus(index: &[usize]) -> bool {
    let hi = *index.iter().max().expect("nonempty profile");
    let tops = index.iter().filter(|&&k| k == hi).count();
    if tops == index.len() {
        return true;
    }
    if tops > 1 {
        return false;
    }
    let mut rest = index.iter().filter(|&&k| k != hi);
    let first = rest.next().expect("at least one non-top entry");
    rest.all(|k| k == first)
}

/// Checks `Σ_i λ_i(v_i) <= Σ_i t_i(v)` on every profile of the product grid.
pub fn verify_dual(d: &DualCertificate, mech: &Mechanism, grid: &Grid) -> DualVerification {
    let n = d.n;
    let m = grid.len();
    let count = profile_count(m, n);
    let slacks: Vec<f64> = (0..count)
        .into_par_iter()
        .map_init(
            || (vec![0usize; n], vec![0.0; n]),
            |(idx, v), flat| {
                unflatten(flat, m, idx);
                for (x, &k) in v.iter_mut().zip(idx.iter()) {
                    *x = grid.node(k);
                }
                mech.total_payment(v) - d.sum_at(idx)
            },
        )
        .collect();

    let mut violations = Vec::new();
    let mut tight = Vec::new();
    let mut max_violation = 0.0f64;
    let mut tight_is_v_plus = true;
    let mut idx = vec![0; n];
    for (flat, &s) in slacks.iter().enumerate() {
        unflatten(flat, m, &mut idx);
        if s < -CERTIFICATE_TOLERANCE {
            violations.push(DualViolation { index: idx.clone(), slack: s });
        }
        max_violation = max_violation.max(-s);
        let is_tight = s.abs() <= CERTIFICATE_TOLERANCE;
        if is_tight != in_v_plus(&idx) {
            tight_is_v_plus = false;
        }
        if is_tight {
            tight.push(idx.clone());
        }
    }
    DualVerification {
        feasible: violations.is_empty(),
        profiles_checked: count,
        violations,
        max_violation,
        tight,
        tight_is_v_plus,
    }
}

/// `Σ mass · max(0, max_{i maximal} φ_i)`: the virtual surplus of the best
/// exclusive allocation when monotonicity is ignored.
pub fn best_response_bound(j: &JointGrid) -> f64 {
    let field = virtual_values(j);
    let mut acc = 0.0;
    for (idx, mass) in j.support() {
        let hi = *idx.iter().max().expect("nonempty profile");
        let best = idx
            .iter()
            .enumerate()
            .filter(|&(_, &k)| k == hi)
            .map(|(i, _)| field.phi(&idx, i))
            .fold(0.0f64, f64::max);
        acc += mass * best;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn canonical_lambda_values() {
        let l = canonical_lambda(ReserveSpec::Beta, 3, 0.5).unwrap();
        assert_abs_diff_eq!(l, 0.5f64.powf(1.5) / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l, 0.117851, epsilon = 1e-6);
        assert_eq!(canonical_lambda(ReserveSpec::Beta, 4, 0.0).unwrap(), 0.0);
        for n in 2..=5 {
            let r = 0.37;
            let at = canonical_lambda(ReserveSpec::Capped { r }, n, r).unwrap();
            let above = canonical_lambda(ReserveSpec::Capped { r }, n, r + 1e-12).unwrap();
            assert_abs_diff_eq!(at, r / n as f64, epsilon = 1e-14);
            assert_abs_diff_eq!(above, at, epsilon = 1e-12);
        }
        assert!(canonical_lambda(ReserveSpec::Uniform, 2, 0.5).is_none());
    }

    #[test]
    fn v_plus_membership() {
        assert!(in_v_plus(&[3, 3, 3]));
        assert!(in_v_plus(&[5, 1, 1]));
        assert!(in_v_plus(&[1, 5, 1]));
        assert!(!in_v_plus(&[5, 5, 1]));
        assert!(!in_v_plus(&[5, 2, 1]));
        assert!(in_v_plus(&[4, 2]));
    }

    #[test]
    fn unsupported_kind_rejected() {
        let d = Marginal::uniform().discretize(5).unwrap();
        let mech = Mechanism::spa_plain(2).unwrap();
        assert!(matches!(build_canonical_dual(&mech, &d), Err(LpError::UnsupportedKind(_))));
    }

    #[test]
    fn zero_certificate_is_feasible() {
        let grid = Grid::uniform(9).unwrap();
        let mech = Mechanism::posted_price(3, 0.4).unwrap();
        let report = verify_dual(&DualCertificate::zero(3, grid.clone()), &mech, &grid);
        assert!(report.feasible);
    }

    #[test]
    fn beta_certificate_tight_on_v_plus() {
        let mech = Mechanism::spa_beta_reserve(3).unwrap();
        let d = Marginal::uniform().discretize(20).unwrap();
        let cert = build_canonical_dual(&mech, &d).unwrap();
        let report = verify_dual(&cert, &mech, &d.grid);
        assert!(report.feasible, "{}", report.max_violation);
        assert!(report.tight_is_v_plus);
    }

    #[test]
    fn capped_certificate_tight_below_cap_on_v_plus() {
        let r = 0.5;
        let mech = Mechanism::spa_capped_beta(2, r).unwrap();
        let d = Marginal::uniform().discretize(40).unwrap();
        let cert = build_canonical_dual(&mech, &d).unwrap();
        let report = verify_dual(&cert, &mech, &d.grid);
        assert!(report.feasible);
        let grid = &d.grid;
        let expected: Vec<Vec<usize>> = (0..profile_count(40, 2))
            .map(|flat| {
                let mut idx = vec![0; 2];
                unflatten(flat, 40, &mut idx);
                idx
            })
            .filter(|idx| {
                let second = grid.node(*idx.iter().min().unwrap());
                in_v_plus(idx) && second <= r
            })
            .collect();
        assert_eq!(report.tight, expected);
    }

    #[test]
    fn capped_dual_value_closed_form() {
        // Uniform, N=2: ∫_0^r x²/r dx + r(1−r) = r²/3 + r − r².
        let mech = Mechanism::spa_capped_beta(2, 0.6).unwrap();
        let v = canonical_dual_value(&mech, &Marginal::uniform()).unwrap();
        assert_abs_diff_eq!(v, 0.36 / 3.0 + 0.6 - 0.36, epsilon = 1e-12);
    }

    #[test]
    fn top_atom_bound() {
        // All mass at 0 except an atom at the top node.
        let grid = Grid::uniform(5).unwrap();
        let p = 0.3;
        let j = JointGrid::from_cells(2, grid, vec![(vec![0, 0], 1.0 - p), (vec![4, 4], p)]).unwrap();
        assert_abs_diff_eq!(best_response_bound(&j), p, epsilon = 1e-15);
    }
}
