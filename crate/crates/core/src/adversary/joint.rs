use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DiscreteMarginal, DistError, Marginal};
use crate::fmt17;
use crate::grid::{flat_index, profile_count, unflatten, Grid};

/// Cell masses in `[-MASS_CLAMP, 0)` are treated as rounding noise and set to zero.
pub const MASS_CLAMP: f64 = 1e-12;
/// Tolerance on the total mass of a coupling.
pub const TOTAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JointError {
    #[error("cell {index:?} has negative mass {mass}")]
    NegativeMass { index: Vec<usize>, mass: f64 },
    #[error("coupling mass sums to {0}, expected 1")]
    TotalMass(f64),
    #[error("cell index {0:?} does not fit the grid")]
    BadIndex(Vec<usize>),
    #[error("a coupling needs at least 2 bidders")]
    TooFewBidders,
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Cells {
    /// Row-major `m × m` masses, `(i1, i2)`.
    Dense(Vec<f64>),
    /// Positive-mass cells keyed by index tuple.
    Sparse(BTreeMap<Vec<usize>, f64>),
}

/// A coupling on the `N`-fold product of a shared value grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGrid {
    n: usize,
    grid: Grid,
    cells: Cells,
}

fn clean(index: &[usize], mass: f64) -> Result<f64, JointError> {
    if mass < -MASS_CLAMP || mass.is_nan() {
        return Err(JointError::NegativeMass { index: index.to_vec(), mass });
    }
    Ok(mass.max(0.0))
}

impl JointGrid {
    /// Two-bidder coupling from a row-major `m × m` matrix.
    pub fn from_dense2(grid: Grid, masses: Vec<f64>) -> Result<Self, JointError> {
        let m = grid.len();
        if masses.len() != m * m {
            return Err(JointError::BadIndex(vec![masses.len()]));
        }
        let mut out = Vec::with_capacity(masses.len());
        for (flat, &x) in masses.iter().enumerate() {
            out.push(clean(&[flat / m, flat % m], x)?);
        }
        Self::finish(Self { n: 2, grid, cells: Cells::Dense(out) })
    }

    /// Coupling from `(index tuple, mass)` entries; repeated cells accumulate.
    /// Two-bidder couplings are stored densely.
    pub fn from_cells<I>(n: usize, grid: Grid, entries: I) -> Result<Self, JointError>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        if n < 2 {
            return Err(JointError::TooFewBidders);
        }
        let m = grid.len();
        let mut map: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (idx, mass) in entries {
            if idx.len() != n || idx.iter().any(|&k| k >= m) {
                return Err(JointError::BadIndex(idx));
            }
            *map.entry(idx).or_insert(0.0) += mass;
        }
        let mut kept = BTreeMap::new();
        for (idx, mass) in map {
            let mass = clean(&idx, mass)?;
            if mass > 0.0 {
                kept.insert(idx, mass);
            }
        }
        if n == 2 {
            let mut dense = vec![0.0; m * m];
            for (idx, mass) in kept {
                dense[idx[0] * m + idx[1]] = mass;
            }
            return Self::finish(Self { n, grid, cells: Cells::Dense(dense) });
        }
        Self::finish(Self { n, grid, cells: Cells::Sparse(kept) })
    }

    fn finish(self) -> Result<Self, JointError> {
        let total = self.total();
        if (total - 1.0).abs() > TOTAL_TOLERANCE {
            return Err(JointError::TotalMass(total));
        }
        Ok(self)
    }

    pub fn n_bidders(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.cells, Cells::Dense(_))
    }

    pub fn total(&self) -> f64 {
        match &self.cells {
            Cells::Dense(d) => d.iter().sum(),
            Cells::Sparse(s) => s.values().sum(),
        }
    }

    /// Mass of the cell at `index` (zero off the support).
    pub fn mass(&self, index: &[usize]) -> f64 {
        match &self.cells {
            Cells::Dense(d) => d[index[0] * self.grid.len() + index[1]],
            Cells::Sparse(s) => s.get(index).copied().unwrap_or(0.0),
        }
    }

    /// Positive-mass cells in lexicographic index order.
    pub fn support(&self) -> Vec<(Vec<usize>, f64)> {
        match &self.cells {
            Cells::Dense(d) => {
                let m = self.grid.len();
                d.iter()
                    .enumerate()
                    .filter(|(_, &x)| x > 0.0)
                    .map(|(flat, &x)| (vec![flat / m, flat % m], x))
                    .collect()
            }
            Cells::Sparse(s) => s.iter().map(|(k, &v)| (k.clone(), v)).collect(),
        }
    }

    pub fn support_len(&self) -> usize {
        match &self.cells {
            Cells::Dense(d) => d.iter().filter(|&&x| x > 0.0).count(),
            Cells::Sparse(s) => s.len(),
        }
    }

    /// Node values of an index tuple.
    pub fn values(&self, index: &[usize]) -> Vec<f64> {
        index.iter().map(|&k| self.grid.node(k)).collect()
    }

    /// `E[h(v)]` under the coupling.
    pub fn expect<H: FnMut(&[f64]) -> f64>(&self, mut h: H) -> f64 {
        let mut v = vec![0.0; self.n];
        let mut acc = 0.0;
        for (idx, mass) in self.support() {
            for (x, &k) in v.iter_mut().zip(&idx) {
                *x = self.grid.node(k);
            }
            acc += mass * h(&v);
        }
        acc
    }

    /// The `i`-th one-dimensional marginal as a pmf on the grid.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for (idx, mass) in self.support() {
            out[idx[i]] += mass;
        }
        out
    }

    /// Largest deviation of any marginal from `target`.
    pub fn marginal_error(&self, target: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                self.marginal(i).iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// CSV with columns `i1..iN, v1..vN, mass`, one row per support cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let idx_cols: Vec<String> = (1..=self.n).map(|i| format!("i{i}")).collect();
        let val_cols: Vec<String> = (1..=self.n).map(|i| format!("v{i}")).collect();
        let _ = writeln!(out, "{},{},mass", idx_cols.join(","), val_cols.join(","));
        for (idx, mass) in self.support() {
            let ids: Vec<String> = idx.iter().map(|k| k.to_string()).collect();
            let vals: Vec<String> = idx.iter().map(|&k| fmt17(self.grid.node(k))).collect();
            let _ = writeln!(out, "{},{},{}", ids.join(","), vals.join(","), fmt17(mass));
        }
        out
    }
}

/// Product coupling of `n` copies of the discretized marginal.
pub fn independent_joint(f: &Marginal, n: usize, m: usize) -> Result<JointGrid, JointError> {
    let d = f.discretize(m)?;
    independent_from_pmf(&d, n)
}

pub fn independent_from_pmf(d: &DiscreteMarginal, n: usize) -> Result<JointGrid, JointError> {
    let m = d.grid.len();
    let support: Vec<usize> = (0..m).filter(|&k| d.pmf[k] > 0.0).collect();
    let s = support.len();
    let mut entries = Vec::new();
    let mut local = vec![0; n];
    for flat in 0..profile_count(s, n) {
        unflatten(flat, s, &mut local);
        let idx: Vec<usize> = local.iter().map(|&k| support[k]).collect();
        let mass = idx.iter().map(|&k| d.pmf[k]).product();
        entries.push((idx, mass));
    }
    JointGrid::from_cells(n, d.grid.clone(), entries)
}

/// Maximally positively correlated coupling: all mass on the diagonal.
pub fn comonotone(f: &Marginal, n: usize, m: usize) -> Result<JointGrid, JointError> {
    let d = f.discretize(m)?;
    comonotone_from_pmf(&d, n)
}

pub fn comonotone_from_pmf(d: &DiscreteMarginal, n: usize) -> Result<JointGrid, JointError> {
    let entries = d.pmf.iter().enumerate().map(|(k, &p)| (vec![k; n], p));
    JointGrid::from_cells(n, d.grid.clone(), entries)
}

/// Dense product-grid masses in lexicographic order, for LP interchange.
pub fn dense_masses(j: &JointGrid) -> Vec<f64> {
    let m = j.grid.len();
    let mut out = vec![0.0; profile_count(m, j.n)];
    for (idx, mass) in j.support() {
        out[flat_index(&idx, m)] = mass;
    }
    out
}
