use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::mech::Mechanism;

use super::joint::JointGrid;

/// Default tolerance for virtual-value identities on the grid.
pub const VIRTUAL_TOLERANCE: f64 = 1e-9;

/// Discrete conditional virtual values on the support of a coupling.
///
/// In the slice `v_{−i}` the value at node `j` is
/// `x_j − w_j · P(v_i > x_j, v_{−i}) / P(v_i = x_j, v_{−i})`, with `w_j` the
/// cell width (zero at the top node, which is an atom).
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualField {
    n: usize,
    grid: Grid,
    phi: BTreeMap<Vec<usize>, Vec<f64>>,
}

impl VirtualField {
    pub fn n_bidders(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `φ_i` at a cell; zero off the support.
    pub fn phi(&self, index: &[usize], i: usize) -> f64 {
        self.phi.get(index).map_or(0.0, |p| p[i])
    }

    pub fn on_support(&self, index: &[usize]) -> bool {
        self.phi.contains_key(index)
    }

    /// Support cells with their per-bidder virtual values.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &Vec<f64>)> {
        self.phi.iter()
    }

    /// Largest `|φ_i|` over highest bidders at support cells whose maximum
    /// lies below the top node.
    pub fn max_high_phi_off_top(&self) -> f64 {
        let top = self.grid.top();
        let mut worst = 0.0f64;
        for (idx, phis) in &self.phi {
            let hi = idx.iter().copied().max().unwrap_or(top);
            if hi == top {
                continue;
            }
            for (k, p) in idx.iter().zip(phis) {
                if *k == hi {
                    worst = worst.max(p.abs());
                }
            }
        }
        worst
    }
}

pub fn virtual_values(j: &JointGrid) -> VirtualField {
    let n = j.n_bidders();
    let grid = j.grid().clone();
    let support = j.support();
    let mut phi: BTreeMap<Vec<usize>, Vec<f64>> =
        support.iter().map(|(idx, _)| (idx.clone(), vec![0.0; n])).collect();

    for i in 0..n {
        let mut slices: BTreeMap<Vec<usize>, Vec<(usize, f64)>> = BTreeMap::new();
        for (idx, mass) in &support {
            let mut key = idx.clone();
            key.remove(i);
            slices.entry(key).or_default().push((idx[i], *mass));
        }
        for (key, mut cells) in slices {
            cells.sort_by_key(|c| c.0);
            let mut tail = 0.0;
            for &(k, mass) in cells.iter().rev() {
                let value = grid.node(k) - grid.width(k) * tail / mass;
                let mut idx = key.clone();
                idx.insert(i, k);
                phi.get_mut(&idx).expect("support cell")[i] = value;
                tail += mass;
            }
        }
    }
    VirtualField { n, grid, phi }
}

/// `E[Σ_i q_i φ_i]` under the coupling.
pub fn expected_virtual_surplus(m: &Mechanism, j: &JointGrid) -> f64 {
    let field = virtual_values(j);
    let mut acc = 0.0;
    for (idx, mass) in j.support() {
        let v = j.values(&idx);
        let q = m.allocation(&v);
        let phis = &field.phi[&idx];
        acc += mass * q.iter().zip(phis).map(|(a, b)| a * b).sum::<f64>();
    }
    acc
}

/// `E[Σ_i t_i]` under the coupling.
pub fn expected_payment(m: &Mechanism, j: &JointGrid) -> f64 {
    j.expect(|v| m.total_payment(v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellNote {
    pub index: Vec<usize>,
    pub bidder: usize,
    pub phi: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterbidderReport {
    pub violations: Vec<CellNote>,
    /// Informational: non-maximal bidders with positive virtual value.
    pub findings: Vec<CellNote>,
}

/// For two bidders, the higher bidder's virtual value must dominate on the
/// support. For more bidders, a maximal bidder below the top node must have
/// zero virtual value on the grid trace of `V⁺` and a bidder at the top node
/// a nonnegative one; positive virtual values of lower bidders are findings.
pub fn interbidder_monotone_check(field: &VirtualField, tol: f64) -> InterbidderReport {
    let mut report = InterbidderReport::default();
    let top = field.grid.top();
    for (idx, phis) in field.iter() {
        let hi = *idx.iter().max().unwrap();
        if field.n == 2 {
            let (w, l) = if idx[0] >= idx[1] { (0, 1) } else { (1, 0) };
            if phis[w] < phis[l] - tol {
                report.violations.push(CellNote {
                    index: idx.clone(),
                    bidder: w,
                    phi: phis[w],
                    detail: format!("higher bidder below lower bidder's {}", phis[l]),
                });
            }
            continue;
        }
        let in_v_plus = {
            let mut rest = idx.iter().filter(|&&k| k != hi);
            match rest.next() {
                None => true,
                Some(first) => rest.all(|k| k == first) && idx.iter().filter(|&&k| k == hi).count() == 1,
            }
        };
        for (i, &phi) in phis.iter().enumerate() {
            if idx[i] == hi {
                let broken = if hi == top { phi < -tol } else { phi.abs() > tol };
                if in_v_plus && broken {
                    let expected = if hi == top { "a nonnegative value" } else { "zero" };
                    report.violations.push(CellNote {
                        index: idx.clone(),
                        bidder: i,
                        phi,
                        detail: format!("maximal bidder expected {expected}"),
                    });
                }
            } else if phi > tol {
                report.findings.push(CellNote {
                    index: idx.clone(),
                    bidder: i,
                    phi,
                    detail: "lower bidder has positive virtual value".into(),
                });
            }
        }
    }
    report
}
