#![allow(dead_code)]

use maxmin_core::adversary::JointGrid;
use maxmin_core::{DiscreteMarginal, Grid, Marginal};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A piecewise-uniform marginal with random cell masses and optional end atoms.
pub fn random_marginal(rng: &mut ChaCha8Rng) -> Marginal {
    let cells = rng.gen_range(2..=6);
    let mut points: Vec<f64> = (0..cells - 1).map(|_| rng.gen_range(0.05..0.95)).collect();
    points.push(0.0);
    points.push(1.0);
    points.sort_by(f64::total_cmp);
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let k = points.len() - 1;
    let zero = if rng.gen_bool(0.3) { rng.gen_range(0.0..0.2) } else { 0.0 };
    let one = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.3) } else { 0.0 };
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let masses = raw.iter().map(|x| x / s * (1.0 - zero - one)).collect();
    Marginal::piecewise(points, masses, zero, one).expect("valid random marginal")
}

/// A grid on `[0,1]` with `m` nodes and random interior spacing.
pub fn random_grid(rng: &mut ChaCha8Rng, m: usize) -> Grid {
    let mut nodes: Vec<f64> = (0..m - 2).map(|_| rng.gen_range(0.01..0.99)).collect();
    nodes.push(0.0);
    nodes.push(1.0);
    nodes.sort_by(f64::total_cmp);
    for j in 1..m - 1 {
        if nodes[j] - nodes[j - 1] < 1e-4 {
            nodes[j] = nodes[j - 1] + 1e-4;
        }
    }
    Grid::from_nodes(nodes).expect("increasing nodes")
}

/// Quantile coupling after a random reordering of each bidder's nodes: a
/// vertex of the multi-marginal transportation polytope.
fn permuted_vertex(d: &DiscreteMarginal, n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<usize>, f64)> {
    let support: Vec<usize> = (0..d.pmf.len()).filter(|&k| d.pmf[k] > 0.0).collect();
    let orders: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let mut o = support.clone();
            o.shuffle(rng);
            o
        })
        .collect();
    let mut left: Vec<Vec<f64>> = orders.iter().map(|o| o.iter().map(|&k| d.pmf[k]).collect()).collect();
    let mut pos = vec![0usize; n];
    let mut cells = Vec::new();
    loop {
        let step = (0..n).map(|i| left[i][pos[i]]).fold(f64::INFINITY, f64::min);
        cells.push(((0..n).map(|i| orders[i][pos[i]]).collect(), step));
        let mut done = false;
        for i in 0..n {
            left[i][pos[i]] -= step;
            if left[i][pos[i]] <= 1e-15 {
                pos[i] += 1;
                if pos[i] == support.len() {
                    done = true;
                }
            }
        }
        if done {
            break;
        }
    }
    cells
}

/// A random point of the coupling polytope: a convex combination of
/// `vertices` random vertices.
pub fn random_coupling(d: &DiscreteMarginal, n: usize, vertices: usize, rng: &mut ChaCha8Rng) -> JointGrid {
    let weights: Vec<f64> = (0..vertices).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = weights.iter().sum();
    let mut entries = Vec::new();
    for w in weights {
        for (idx, mass) in permuted_vertex(d, n, rng) {
            entries.push((idx, mass * w / s));
        }
    }
    JointGrid::from_cells(n, d.grid.clone(), entries).expect("valid coupling")
}

/// Minimum of `Σ c_ij x_ij` over the 3×3 transportation polytope by
/// enumerating every basic solution.
pub fn vertex_enumeration_3x3(cost: &[f64], supply: &[f64], demand: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for subset in 0u32..(1 << 9) {
        if subset.count_ones() != 5 {
            continue;
        }
        let cells: Vec<usize> = (0..9).filter(|&c| subset & (1 << c) != 0).collect();
        // Three row equations and two column equations; the third column is implied.
        let mut a = [[0.0f64; 6]; 5];
        for (col, &cell) in cells.iter().enumerate() {
            a[cell / 3][col] = 1.0;
            if cell % 3 < 2 {
                a[3 + cell % 3][col] = 1.0;
            }
        }
        for r in 0..3 {
            a[r][5] = supply[r];
        }
        a[3][5] = demand[0];
        a[4][5] = demand[1];
        if let Some(x) = gauss_solve(a) {
            if x.iter().all(|&v| v >= -1e-13) {
                let value: f64 = cells.iter().zip(&x).map(|(&c, &v)| cost[c] * v).sum();
                best = best.min(value);
            }
        }
    }
    best
}

fn gauss_solve(mut a: [[f64; 6]; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..5 {
            if r != col {
                let f = a[r][col] / a[col][col];
                let pivot_row = a[col];
                for (x, p) in a[r].iter_mut().zip(pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut x = [0.0; 5];
    for r in 0..5 {
        x[r] = a[r][5] / a[r][r];
    }
    Some(x)
}
