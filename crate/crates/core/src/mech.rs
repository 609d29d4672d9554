//! Dominant-strategy mechanisms on `[0, 1]^N`: second price auctions with
//! random reserves, posted prices and tabulated custom allocations, with
//! payments derived from the Myerson envelope formula.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{flat_index, profile_count, unflatten, Grid, GridError};
use crate::quad;

/// Tolerance for grid-based incentive and feasibility checks.
pub const CHECK_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance for quadrature payments.
pub const PAYMENT_QUAD_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechError {
    #[error("a mechanism needs at least 2 bidders, got {0}")]
    TooFewBidders(usize),
    #[error("profile has {got} values, mechanism has {expected} bidders")]
    ProfileLength { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("allocation table for bidder {bidder} has {got} entries, expected {expected}")]
    TableShape { bidder: usize, expected: usize, got: usize },
    #[error(
        "allocation of bidder {bidder} decreases from {q_low} at bid {low} to {q_high} at bid {high}"
    )]
    NonMonotone { bidder: usize, low: f64, high: f64, q_low: f64, q_high: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Reserve-price distribution `G` of a second price auction with random reserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReserveSpec {
    /// No reserve: `G ≡ 1`.
    None,
    Uniform,
    /// `Beta(1/(N-1), 1)`: `G(v) = v^{1/(N-1)}`.
    Beta,
    /// `G(v) = (v/r)^{1/(N-1)}` below `r`, `1` from `r` on.
    Capped { r: f64 },
    /// Deterministic reserve `r`.
    Degenerate { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReserveDistribution {
    spec: ReserveSpec,
    n: usize,
}

impl ReserveDistribution {
    pub fn new(spec: ReserveSpec, n: usize) -> Result<Self, MechError> {
        if n < 2 {
            return Err(MechError::TooFewBidders(n));
        }
        match spec {
            ReserveSpec::Capped { r } if !(r > 0.0 && r <= 1.0) => {
                Err(MechError::InvalidParameter(format!("cap r must lie in (0,1], got {r}")))
            }
            ReserveSpec::Degenerate { r } if !(0.0..=1.0).contains(&r) => {
                Err(MechError::InvalidParameter(format!("reserve r must lie in [0,1], got {r}")))
            }
            _ => Ok(Self { spec, n }),
        }
    }

    pub fn spec(&self) -> ReserveSpec {
        self.spec
    }

    fn shape(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    /// Right-continuous reserve CDF.
    pub fn cdf(&self, v: f64) -> f64 {
        if v < 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match self.spec {
            ReserveSpec::None => 1.0,
            ReserveSpec::Uniform => v,
            ReserveSpec::Beta => v.powf(self.shape()),
            ReserveSpec::Capped { r } => {
                if v >= r {
                    1.0
                } else {
                    (v / r).powf(self.shape())
                }
            }
            ReserveSpec::Degenerate { r } => {
                if v >= r {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Closed-form `∫_a^b G(s) ds` for `0 <= a <= b <= 1`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let p = 1.0 + self.shape();
        match self.spec {
            ReserveSpec::None => b - a,
            ReserveSpec::Uniform => 0.5 * (b * b - a * a),
            ReserveSpec::Beta => (b.powf(p) - a.powf(p)) / p,
            ReserveSpec::Capped { r } => {
                let lo = a.min(r);
                let hi = b.min(r);
                let below = r * ((hi / r).powf(p) - (lo / r).powf(p)) / p;
                below + (b - a.max(r)).max(0.0)
            }
            ReserveSpec::Degenerate { r } => (b - a.max(r)).max(0.0),
        }
    }

    /// Points where `G` is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match self.spec {
            ReserveSpec::Capped { r } | ReserveSpec::Degenerate { r } => vec![r],
            _ => Vec::new(),
        }
    }
}

/// Allocation table on a grid, step-interpolated off the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomTable {
    grid: Grid,
    /// `alloc[i][flat]` for bidder `i` at the lexicographic profile `flat`.
    alloc: Vec<Vec<f64>>,
    /// Optional payment table overriding the envelope formula.
    payments: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismKind {
    SpaRandomReserve(ReserveDistribution),
    PostedPrice { p: f64 },
    Custom(CustomTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    n: usize,
    kind: MechanismKind,
}

/// JSON descriptor of a mechanism. `n` may be left out and supplied by the
/// surrounding run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    SpaRandomReserve {
        reserve: ReserveSpec,
        n: Option<usize>,
    },
    SpaUniformReserve {
        n: Option<usize>,
    },
    SpaBetaReserve {
        n: Option<usize>,
    },
    SpaCappedBeta {
        r: f64,
        n: Option<usize>,
    },
    SpaPlain {
        n: Option<usize>,
    },
    SpaDeterministicReserve {
        r: f64,
        n: Option<usize>,
    },
    PostedPrice {
        p: f64,
        n: Option<usize>,
    },
    Custom {
        nodes: Vec<f64>,
        allocation: Vec<Vec<f64>>,
        payments: Option<Vec<Vec<f64>>>,
        n: Option<usize>,
    },
}

impl MechanismSpec {
    pub fn n(&self) -> Option<usize> {
        match self {
            MechanismSpec::SpaRandomReserve { n, .. }
            | MechanismSpec::SpaUniformReserve { n }
            | MechanismSpec::SpaBetaReserve { n }
            | MechanismSpec::SpaCappedBeta { n, .. }
            | MechanismSpec::SpaPlain { n }
            | MechanismSpec::SpaDeterministicReserve { n, .. }
            | MechanismSpec::PostedPrice { n, .. }
            | MechanismSpec::Custom { n, .. } => *n,
        }
    }

    /// Builds the mechanism; `default_n` is used when the descriptor has no `n`.
    pub fn build(&self, default_n: usize) -> Result<Mechanism, MechError> {
        let n = self.n().unwrap_or(default_n);
        match self {
            MechanismSpec::SpaRandomReserve { reserve, .. } => {
                Mechanism::spa_random_reserve(ReserveDistribution::new(*reserve, n)?)
            }
            MechanismSpec::SpaUniformReserve { .. } => Mechanism::spa_uniform_reserve(n),
            MechanismSpec::SpaBetaReserve { .. } => Mechanism::spa_beta_reserve(n),
            MechanismSpec::SpaCappedBeta { r, .. } => Mechanism::spa_capped_beta(n, *r),
            MechanismSpec::SpaPlain { .. } => Mechanism::spa_plain(n),
            MechanismSpec::SpaDeterministicReserve { r, .. } => Mechanism::spa_deterministic_reserve(n, *r),
            MechanismSpec::PostedPrice { p, .. } => Mechanism::posted_price(n, *p),
            MechanismSpec::Custom { nodes, allocation, payments, .. } => Mechanism::custom(
                n,
                Grid::from_nodes(nodes.clone())?,
                allocation.clone(),
                payments.clone(),
            ),
        }
    }
}

/// A single-bidder witness found by a grid check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileViolation {
    pub bidder: usize,
    pub profile: Vec<f64>,
    /// Misreport (DSIC) or the higher own bid (monotonicity), when relevant.
    pub other_bid: Option<f64>,
    pub magnitude: f64,
}

impl Mechanism {
    pub fn spa_random_reserve(g: ReserveDistribution) -> Result<Self, MechError> {
        Ok(Self { n: g.n, kind: MechanismKind::SpaRandomReserve(g) })
    }

    pub fn spa_uniform_reserve(n: usize) -> Result<Self, MechError> {
        Self::spa_random_reserve(ReserveDistribution::new(ReserveSpec::Uniform, n)?)
    }

    pub fn spa_beta_reserve(n: usize) -> Result<Self, MechError> {
        Self::spa_random_reserve(ReserveDistribution::new(ReserveSpec::Beta, n)?)
    }

    pub fn spa_capped_beta(n: usize, r: f64) -> Result<Self, MechError> {
        Self::spa_random_reserve(ReserveDistribution::new(ReserveSpec::Capped { r }, n)?)
    }

    pub fn spa_plain(n: usize) -> Result<Self, MechError> {
        Self::spa_random_reserve(ReserveDistribution::new(ReserveSpec::None, n)?)
    }

    pub fn spa_deterministic_reserve(n: usize, r: f64) -> Result<Self, MechError> {
        Self::spa_random_reserve(ReserveDistribution::new(ReserveSpec::Degenerate { r }, n)?)
    }

    /// Sells to the lowest-indexed bidder with value at least `p`, at price `p`.
    pub fn posted_price(n: usize, p: f64) -> Result<Self, MechError> {
        if n < 2 {
            return Err(MechError::TooFewBidders(n));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(MechError::InvalidParameter(format!("price must lie in [0,1], got {p}")));
        }
        Ok(Self { n, kind: MechanismKind::PostedPrice { p } })
    }

    /// A tabulated mechanism. `allocation[i]` lists bidder `i`'s allocation over
    /// the `m^n` grid profiles in lexicographic order; an optional payment
    /// table of the same shape replaces the envelope payments.
    pub fn custom(
        n: usize,
        grid: Grid,
        allocation: Vec<Vec<f64>>,
        payments: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, MechError> {
        if n < 2 {
            return Err(MechError::TooFewBidders(n));
        }
        let cells = profile_count(grid.len(), n);
        let check_shape = |tables: &[Vec<f64>]| -> Result<(), MechError> {
            if tables.len() != n {
                return Err(MechError::InvalidParameter(format!(
                    "expected {n} per-bidder tables, got {}",
                    tables.len()
                )));
            }
            for (bidder, t) in tables.iter().enumerate() {
                if t.len() != cells {
                    return Err(MechError::TableShape { bidder, expected: cells, got: t.len() });
                }
            }
            Ok(())
        };
        check_shape(&allocation)?;
        if let Some(p) = &payments {
            check_shape(p)?;
        }
        for flat in 0..cells {
            let total: f64 = allocation.iter().map(|t| t[flat]).sum();
            if allocation.iter().any(|t| t[flat].is_nan() || t[flat] < 0.0) || total > 1.0 + CHECK_TOLERANCE {
                return Err(MechError::InvalidParameter(format!(
                    "allocation at profile {flat} is not a sub-probability vector"
                )));
            }
        }
        Ok(Self { n, kind: MechanismKind::Custom(CustomTable { grid, alloc: allocation, payments }) })
    }

    /// Tabulates `q(profile, bidder)` on the grid as a custom mechanism.
    pub fn custom_from_fn<Q: Fn(&[f64], usize) -> f64>(
        n: usize,
        grid: Grid,
        q: Q,
    ) -> Result<Self, MechError> {
        let m = grid.len();
        let cells = profile_count(m, n);
        let mut alloc = vec![vec![0.0; cells]; n];
        let mut idx = vec![0; n];
        let mut v = vec![0.0; n];
        for flat in 0..cells {
            unflatten(flat, m, &mut idx);
            for (x, &k) in v.iter_mut().zip(&idx) {
                *x = grid.node(k);
            }
            for (i, table) in alloc.iter_mut().enumerate() {
                table[flat] = q(&v, i);
            }
        }
        Self::custom(n, grid, alloc, None)
    }

    /// The allocation of this mechanism sampled on `grid`, as a custom table.
    pub fn tabulate(&self, grid: &Grid) -> Result<Self, MechError> {
        Self::custom_from_fn(self.n, grid.clone(), |v, i| self.allocation_of(v, i))
    }

    pub fn n_bidders(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &MechanismKind {
        &self.kind
    }

    pub fn kind_tag(&self) -> &'static str {
        match &self.kind {
            MechanismKind::SpaRandomReserve(g) => match g.spec {
                ReserveSpec::None => "spa_plain",
                ReserveSpec::Uniform => "spa_uniform_reserve",
                ReserveSpec::Beta => "spa_beta_reserve",
                ReserveSpec::Capped { .. } => "spa_capped_beta",
                ReserveSpec::Degenerate { .. } => "spa_deterministic_reserve",
            },
            MechanismKind::PostedPrice { .. } => "posted_price",
            MechanismKind::Custom(_) => "custom",
        }
    }

    pub fn reserve(&self) -> Option<&ReserveDistribution> {
        match &self.kind {
            MechanismKind::SpaRandomReserve(g) => Some(g),
            _ => None,
        }
    }

    /// True for the built-in second price kinds, which never allocate below the top bid.
    pub fn is_exclusive_kind(&self) -> bool {
        matches!(self.kind, MechanismKind::SpaRandomReserve(_))
    }

    fn check_profile(&self, v: &[f64]) -> Result<(), MechError> {
        if v.len() != self.n {
            return Err(MechError::ProfileLength { expected: self.n, got: v.len() });
        }
        Ok(())
    }

    /// Allocation vector at profile `v`.
    pub fn allocation(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.allocation_of(v, i)).collect()
    }

    /// Allocation to bidder `i` at profile `v`.
    pub fn allocation_of(&self, v: &[f64], i: usize) -> f64 {
        match &self.kind {
            MechanismKind::SpaRandomReserve(g) => {
                let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if v[i] < top {
                    return 0.0;
                }
                let ties = v.iter().filter(|&&x| x == top).count();
                g.cdf(top) / ties as f64
            }
            MechanismKind::PostedPrice { p } => {
                let winner = v.iter().position(|&x| x >= *p);
                if winner == Some(i) {
                    1.0
                } else {
                    0.0
                }
            }
            MechanismKind::Custom(t) => t.alloc[i][t.flat_of(v)],
        }
    }

    /// Payment of bidder `i` at `v`: the explicit table for custom
    /// mechanisms that carry one, the envelope formula otherwise.
    pub fn payment(&self, v: &[f64], i: usize) -> f64 {
        match &self.kind {
            MechanismKind::Custom(t) if t.payments.is_some() => {
                t.payments.as_ref().unwrap()[i][t.flat_of(v)]
            }
            _ => self.envelope_payment(v, i),
        }
    }

    /// Sum of payments at `v`.
    pub fn total_payment(&self, v: &[f64]) -> f64 {
        match &self.kind {
            MechanismKind::SpaRandomReserve(g) => {
                let (top, second, ties) = order_stats(v);
                if ties > 1 {
                    top * g.cdf(top)
                } else {
                    top * g.cdf(top) - g.integral(second, top)
                }
            }
            _ => (0..self.n).map(|i| self.payment(v, i)).sum(),
        }
    }

    /// `t_i = v_i q_i(v) − ∫_0^{v_i} q_i(s, v_{−i}) ds`. Custom allocations must be
    /// nondecreasing in the own bid along the line through `v`.
    pub fn myerson_payment(&self, v: &[f64], i: usize) -> Result<f64, MechError> {
        self.check_profile(v)?;
        if let MechanismKind::Custom(t) = &self.kind {
            t.check_line_monotone(v, i)?;
        }
        Ok(self.envelope_payment(v, i))
    }

    fn envelope_payment(&self, v: &[f64], i: usize) -> f64 {
        match &self.kind {
            MechanismKind::SpaRandomReserve(g) => {
                let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if v[i] < top {
                    return 0.0;
                }
                let ties = v.iter().filter(|&&x| x == top).count();
                if ties > 1 {
                    return top * g.cdf(top) / ties as f64;
                }
                let second = v
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &x)| x)
                    .fold(0.0, f64::max);
                top * g.cdf(top) - g.integral(second, top)
            }
            MechanismKind::PostedPrice { p } => {
                if self.allocation_of(v, i) > 0.0 {
                    *p
                } else {
                    0.0
                }
            }
            MechanismKind::Custom(t) => t.step_payment(v, i),
        }
    }

    /// Envelope payment with the integral done by adaptive quadrature. Used to
    /// cross-check the closed forms.
    pub fn myerson_payment_quadrature(&self, v: &[f64], i: usize) -> Result<f64, MechError> {
        self.check_profile(v)?;
        let line = |s: f64| {
            let mut w = v.to_vec();
            w[i] = s;
            self.allocation_of(&w, i)
        };
        let mut breaks: Vec<f64> = v.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
        match &self.kind {
            MechanismKind::SpaRandomReserve(g) => breaks.extend(g.breakpoints()),
            MechanismKind::PostedPrice { p } => breaks.push(*p),
            MechanismKind::Custom(t) => breaks.extend_from_slice(t.grid.nodes()),
        }
        let own = v[i];
        let integral = quad::integrate_with_breaks(line, 0.0, own, &breaks, PAYMENT_QUAD_TOLERANCE);
        let q_here = self.allocation_of(v, i);
        Ok(own * q_here - integral)
    }

    /// Total payment at every profile of the `n`-fold product grid, in
    /// lexicographic order.
    pub fn payment_table(&self, grid: &Grid) -> Vec<f64> {
        let m = grid.len();
        let n = self.n;
        (0..profile_count(m, n))
            .into_par_iter()
            .map_init(
                || (vec![0usize; n], vec![0.0; n]),
                |(idx, v), flat| {
                    unflatten(flat, m, idx);
                    for (x, &k) in v.iter_mut().zip(idx.iter()) {
                        *x = grid.node(k);
                    }
                    self.total_payment(v)
                },
            )
            .collect()
    }

    /// All profitable single-bidder misreports on the grid.
    pub fn check_dsic(&self, grid: &Grid) -> Vec<ProfileViolation> {
        self.sweep(grid, |v, i, out| {
            let truth = v[i];
            let honest = truth * self.allocation_of(v, i) - self.payment(v, i);
            let mut w = v.to_vec();
            for &lie in grid.nodes() {
                if lie == truth {
                    continue;
                }
                w[i] = lie;
                let gain = truth * self.allocation_of(&w, i) - self.payment(&w, i) - honest;
                if gain > CHECK_TOLERANCE {
                    out.push(violation(i, v, Some(lie), gain));
                }
            }
        })
    }

    /// Profiles where some bidder's utility is negative.
    pub fn check_epir(&self, grid: &Grid) -> Vec<ProfileViolation> {
        self.sweep(grid, |v, i, out| {
            let loss = self.payment(v, i) - v[i] * self.allocation_of(v, i);
            if loss > CHECK_TOLERANCE {
                out.push(violation(i, v, None, loss));
            }
        })
    }

    /// Profiles where a bidder below the top bid receives the good.
    pub fn check_exclusive(&self, grid: &Grid) -> Vec<ProfileViolation> {
        self.sweep(grid, |v, i, out| {
            let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let q = self.allocation_of(v, i);
            if v[i] < top && q > CHECK_TOLERANCE {
                out.push(violation(i, v, None, q));
            }
        })
    }

    /// Adjacent own-bid pairs where allocation decreases.
    pub fn check_monotone(&self, grid: &Grid) -> Vec<ProfileViolation> {
        self.sweep(grid, |v, i, out| {
            let k = grid.floor_index(v[i]);
            if k == grid.top() {
                return;
            }
            let mut w = v.to_vec();
            w[i] = grid.node(k + 1);
            let drop = self.allocation_of(v, i) - self.allocation_of(&w, i);
            if drop > CHECK_TOLERANCE {
                out.push(violation(i, v, Some(w[i]), drop));
            }
        })
    }

    fn sweep<C>(&self, grid: &Grid, check: C) -> Vec<ProfileViolation>
    where
        C: Fn(&[f64], usize, &mut Vec<ProfileViolation>) + Sync,
    {
        let m = grid.len();
        let n = self.n;
        (0..profile_count(m, n))
            .into_par_iter()
            .flat_map_iter(|flat| {
                let mut idx = vec![0; n];
                unflatten(flat, m, &mut idx);
                let v: Vec<f64> = idx.iter().map(|&k| grid.node(k)).collect();
                let mut out = Vec::new();
                for i in 0..n {
                    check(&v, i, &mut out);
                }
                out
            })
            .collect()
    }
}

fn violation(bidder: usize, v: &[f64], other_bid: Option<f64>, magnitude: f64) -> ProfileViolation {
    ProfileViolation { bidder, profile: v.to_vec(), other_bid, magnitude }
}

/// Highest value, highest value among the rest once one top bidder is
/// removed, and the number of bidders tied at the top.
pub fn order_stats(v: &[f64]) -> (f64, f64, usize) {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties = v.iter().filter(|&&x| x == top).count();
    let second = if ties > 1 {
        top
    } else {
        v.iter().copied().filter(|&x| x < top).fold(0.0, f64::max)
    };
    (top, second, ties)
}

impl CustomTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn flat_of(&self, v: &[f64]) -> usize {
        let m = self.grid.len();
        v.iter().fold(0, |acc, &x| acc * m + self.grid.floor_index(x))
    }

    fn line_index(&self, v: &[f64]) -> Vec<usize> {
        v.iter().map(|&x| self.grid.floor_index(x)).collect()
    }

    /// Exact envelope payment for a step-interpolated allocation.
    fn step_payment(&self, v: &[f64], i: usize) -> f64 {
        let m = self.grid.len();
        let mut idx = self.line_index(v);
        let own = idx[i];
        let table = &self.alloc[i];
        let mut integral = 0.0;
        for l in 0..own {
            idx[i] = l;
            integral += table[flat_index(&idx, m)] * self.grid.width(l);
        }
        idx[i] = own;
        let q = table[flat_index(&idx, m)];
        integral += q * (v[i] - self.grid.node(own));
        v[i] * q - integral
    }

    fn check_line_monotone(&self, v: &[f64], i: usize) -> Result<(), MechError> {
        let m = self.grid.len();
        let mut idx = self.line_index(v);
        let own = idx[i];
        let table = &self.alloc[i];
        let mut prev: Option<(usize, f64)> = None;
        for l in 0..=own {
            idx[i] = l;
            let q = table[flat_index(&idx, m)];
            if let Some((k, qk)) = prev {
                if qk > q + CHECK_TOLERANCE {
                    return Err(MechError::NonMonotone {
                        bidder: i,
                        low: self.grid.node(k),
                        high: self.grid.node(l),
                        q_low: qk,
                        q_high: q,
                    });
                }
            }
            prev = Some((l, q));
        }
        Ok(())
    }
}
