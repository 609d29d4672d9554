use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("a value grid needs at least {min} nodes, got {got}")]
    TooSmall { min: usize, got: usize },
    #[error("grid nodes must start at 0, end at 1 and be strictly increasing")]
    BadNodes,
}

/// A shared one-dimensional value grid on `[0, 1]`.
///
/// Node `j` stands for the half-open cell `[x_j, x_{j+1})`; the top node is
/// the single point `1`, so it only ever carries atom mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nodes: Vec<f64>,
}

impl Grid {
    /// `m` equispaced nodes `j / (m - 1)`.
    pub fn uniform(m: usize) -> Result<Self, GridError> {
        if m < 2 {
            return Err(GridError::TooSmall { min: 2, got: m });
        }
        let step = (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|j| j as f64 / step).collect();
        nodes[m - 1] = 1.0;
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, GridError> {
        if nodes.len() < 2 {
            return Err(GridError::TooSmall { min: 2, got: nodes.len() });
        }
        let ok = nodes[0] == 0.0
            && *nodes.last().unwrap() == 1.0
            && nodes.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(GridError::BadNodes);
        }
        Ok(Self { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    pub fn top(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Width of the cell owned by node `j`; zero for the top node.
    pub fn width(&self, j: usize) -> f64 {
        if j + 1 < self.nodes.len() {
            self.nodes[j + 1] - self.nodes[j]
        } else {
            0.0
        }
    }

    pub fn max_width(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Largest `j` with `x_j <= x` (clamped into the grid).
    pub fn floor_index(&self, x: f64) -> usize {
        match self.nodes.binary_search_by(|n| n.total_cmp(&x)) {
            Ok(j) => j,
            Err(0) => 0,
            Err(j) => j - 1,
        }
    }
}

/// Number of profiles in the `n`-fold product of an `m`-node grid.
pub fn profile_count(m: usize, n: usize) -> usize {
    m.checked_pow(n as u32).expect("profile grid too large")
}

/// Lexicographic flat index of an index tuple (last coordinate fastest).
pub fn flat_index(idx: &[usize], m: usize) -> usize {
    idx.iter().fold(0, |acc, &k| acc * m + k)
}

/// Inverse of [`flat_index`].
pub fn unflatten(mut flat: usize, m: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % m;
        flat /= m;
    }
}
