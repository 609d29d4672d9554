use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{exponent, DistError, Marginal, REGULARITY_SAMPLES, SHAPE_TOLERANCE};

use super::joint::{JointError, JointGrid};

/// Top-atom masses below `-ATOM_TOLERANCE` make a structure infeasible.
pub const ATOM_TOLERANCE: f64 = 1e-12;

/// Why an adversarial structure is not a probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "witness", rename_all = "snake_case")]
pub enum FeasibilityWitness {
    /// The structure's density factor `c(k)` is negative at `at`.
    NegativeDensity { at: f64, value: f64 },
    /// `Pr*(1,…,1) < 0`.
    NegativeTopAtom { mass: f64 },
    /// The grid version has a negative mass at value `at` although the
    /// continuum structure passed.
    NegativeGridMass { at: f64, mass: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("adversarial structure infeasible for {n_bidders} bidders: {witness:?}")]
pub struct FeasibilityFailure {
    pub n_bidders: usize,
    pub witness: FeasibilityWitness,
    /// Continuum top-atom mass, reported whether or not it is the witness.
    pub top_atom: f64,
}

impl FeasibilityFailure {
    /// Location of the witness on the value axis (1 for the top atom).
    pub fn location(&self) -> f64 {
        match self.witness {
            FeasibilityWitness::NegativeDensity { at, .. } => at,
            FeasibilityWitness::NegativeTopAtom { .. } => 1.0,
            FeasibilityWitness::NegativeGridMass { at, .. } => at,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error(transparent)]
    Infeasible(#[from] FeasibilityFailure),
    #[error("build_adversarial_n needs at least 3 bidders; use build_adversarial_2")]
    UseTwoBidderBuilder,
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Joint(#[from] JointError),
}

/// Closed-form symmetric adversarial structure for `N` bidders.
///
/// With `p = N/(N-1)` and `G_p(k) = ∫_0^k s^p f(s) ds`:
/// `c(k) = (f(k) − G_p(k) / ((N−1) k^{1+p})) / (N−1)`, `h(k) = k c(k)`.
/// For `0 < v_(2) < v_(1) < 1` on `V⁺` each winner slice has density
/// `h(v_(2)) / v_(1)²`; the line `v_(1) = 1` has density `h(v_(2))`; the
/// atom at the top profile is `Pr(1) − G_p(1)/(N−1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialDensity {
    marginal: Marginal,
    n: usize,
}

impl AdversarialDensity {
    pub fn new(marginal: Marginal, n: usize) -> Self {
        assert!(n >= 2, "adversarial structures need at least two bidders");
        Self { marginal, n }
    }

    pub fn n_bidders(&self) -> usize {
        self.n
    }

    pub fn marginal(&self) -> &Marginal {
        &self.marginal
    }

    fn p(&self) -> f64 {
        exponent(self.n)
    }

    fn nm1(&self) -> f64 {
        (self.n - 1) as f64
    }

    /// `∫_0^k s^p f(s) ds`.
    pub fn moment_integral(&self, k: f64) -> f64 {
        self.marginal.partial_moment(self.p(), 0.0, k)
    }

    pub fn c(&self, k: f64) -> f64 {
        if !(k > 0.0 && k < 1.0) {
            return 0.0;
        }
        let p = self.p();
        let tail = self.moment_integral(k) / (self.nm1() * k.powf(1.0 + p));
        (self.marginal.density(k) - tail) / self.nm1()
    }

    pub fn h(&self, k: f64) -> f64 {
        k * self.c(k)
    }

    /// `g(k) = G_p(k) / ((N−1) k^{1/(N−1)}) = ∫_0^k h`.
    pub fn g(&self, k: f64) -> f64 {
        if k <= 0.0 {
            return 0.0;
        }
        self.moment_integral(k) / (self.nm1() * k.powf(1.0 / self.nm1()))
    }

    pub fn top_atom(&self) -> f64 {
        self.marginal.atom_at_one() - self.moment_integral(1.0) / self.nm1()
    }

    /// Mass on the all-zero profile.
    pub fn origin_mass(&self) -> f64 {
        self.marginal.atom_at_zero()
    }

    /// Density of one winner slice of `V⁺` at `(v_(1), v_(2))`, `0 < v_(2) < v_(1) < 1`.
    pub fn slice_density(&self, top: f64, second: f64) -> f64 {
        if !(second > 0.0 && second < top && top < 1.0) {
            return 0.0;
        }
        self.h(second) / (top * top)
    }

    /// Two-bidder joint density off the diagonal.
    pub fn density2(&self, v1: f64, v2: f64) -> f64 {
        self.slice_density(v1.max(v2), v1.min(v2))
    }

    /// Density of the line where the winner has value 1.
    pub fn top_line_density(&self, second: f64) -> f64 {
        self.h(second)
    }

    /// Marginal density rebuilt from the structure: `g(k)/k² + (N−1)c(k)`.
    pub fn recovered_marginal_density(&self, k: f64) -> f64 {
        if !(k > 0.0 && k < 1.0) {
            return 0.0;
        }
        self.g(k) / (k * k) + self.nm1() * self.c(k)
    }

    /// Most negative `c(k)` on the regularity sample and the top atom sign.
    pub fn feasibility(&self) -> Result<(), FeasibilityFailure> {
        let denom = (REGULARITY_SAMPLES + 1) as f64;
        let mut worst: Option<(f64, f64)> = None;
        for j in 1..=REGULARITY_SAMPLES {
            let k = j as f64 / denom;
            let c = self.c(k);
            if c < -SHAPE_TOLERANCE && worst.is_none_or(|(_, w)| c < w) {
                worst = Some((k, c));
            }
        }
        let top_atom = self.top_atom();
        let fail = |witness| FeasibilityFailure { n_bidders: self.n, witness, top_atom };
        if let Some((at, value)) = worst {
            return Err(fail(FeasibilityWitness::NegativeDensity { at, value }));
        }
        if top_atom < -ATOM_TOLERANCE {
            return Err(fail(FeasibilityWitness::NegativeTopAtom { mass: top_atom }));
        }
        Ok(())
    }
}

/// A grid coupling together with the closed-form structure it discretizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Adversarial {
    pub joint: JointGrid,
    pub density: AdversarialDensity,
    /// Grid mass of the top profile.
    pub grid_top_atom: f64,
}

/// Two-bidder adversarial structure on an `m`-point grid.
pub fn build_adversarial_2(f: &Marginal, m: usize) -> Result<Adversarial, AdversaryError> {
    build(f, 2, m)
}

/// `N`-bidder adversarial structure (`N >= 3`) on an `m`-point grid, stored
/// sparsely on the grid trace of `V⁺`.
pub fn build_adversarial_n(f: &Marginal, n: usize, m: usize) -> Result<Adversarial, AdversaryError> {
    if n < 3 {
        return Err(AdversaryError::UseTwoBidderBuilder);
    }
    build(f, n, m)
}

/// Solves the structure directly on the grid so that its marginals equal the
/// discretized marginal exactly and the top bidder's discrete virtual value
/// vanishes off the top node.
///
/// With `D_k` the mass of column `k` (all losers at `x_k`), a winner at
/// `x_j` gets `D_k (1/x_j − 1/x_{j+1})` (`D_k` on the top node) and the
/// diagonal cell `D_k (1/x_k − 1/x_{k+1})`. Matching the marginal at `x_k`
/// fixes `D_k` recursively.
fn build(f: &Marginal, n: usize, m: usize) -> Result<Adversarial, AdversaryError> {
    let density = AdversarialDensity::new(f.clone(), n);
    density.feasibility()?;
    let d = f.discretize(m)?;
    let x = d.grid.nodes();
    let top = m - 1;
    let others = (n - 2) as f64;

    let mut column = vec![0.0; m];
    let mut below = 0.0;
    for k in 1..top {
        let step = 1.0 / x[k] - 1.0 / x[k + 1];
        column[k] = (d.pmf[k] - step * below) / (1.0 / x[k] + others / x[k + 1]);
        below += column[k];
    }
    let atom = d.pmf[top] - below;

    let witness = column
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c < -ATOM_TOLERANCE)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, &c)| (x[k], c))
        .or(if atom < -ATOM_TOLERANCE { Some((1.0, atom)) } else { None });
    if let Some((at, mass)) = witness {
        return Err(FeasibilityFailure {
            n_bidders: n,
            witness: FeasibilityWitness::NegativeGridMass { at, mass },
            top_atom: density.top_atom(),
        }
        .into());
    }

    let mut entries = Vec::with_capacity(n * m * m / 2 + m);
    entries.push((vec![0; n], d.pmf[0]));
    for k in 1..top {
        if column[k] <= 0.0 {
            continue;
        }
        entries.push((vec![k; n], column[k] * (1.0 / x[k] - 1.0 / x[k + 1])));
        for j in k + 1..=top {
            let mass = if j == top { column[k] } else { column[k] * (1.0 / x[j] - 1.0 / x[j + 1]) };
            for w in 0..n {
                let mut idx = vec![k; n];
                idx[w] = j;
                entries.push((idx, mass));
            }
        }
    }
    entries.push((vec![top; n], atom.max(0.0)));
    let joint = JointGrid::from_cells(n, d.grid.clone(), entries)?;
    Ok(Adversarial { joint, density, grid_top_atom: atom.max(0.0) })
}
