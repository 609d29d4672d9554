//! Mixed marginal distributions on `[0, 1]`: a density on the open interval
//! plus atoms at the endpoints.
//!
//! All families carry closed-form partial moments
//! `∫_a^b s^p f(s) ds`, which every other module builds on (CDFs, moments,
//! regularity slacks, the adversarial structures and the guarantee formulas).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, GridError};

/// Number of equispaced interior samples used by the pointwise regularity checks.
pub const REGULARITY_SAMPLES: usize = 10_001;
/// Pointwise violations smaller than this are ignored.
pub const SHAPE_TOLERANCE: f64 = 1e-9;
/// Slack tolerance for the probability-mass part of the regularity conditions.
pub const MASS_TOLERANCE: f64 = 1e-12;
/// Total-mass tolerance for a marginal.
pub const TOTAL_MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid {family} parameters: {detail}")]
    InvalidParameter { family: &'static str, detail: String },
    #[error("marginal mass sums to {total}, expected 1")]
    MassMismatch { total: f64 },
    #[error("discretization needs at least 3 grid points, got {0}")]
    GridTooSmall(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// JSON descriptor of a marginal, e.g. `{"family":"equal_revenue","alpha":0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarginalSpec {
    EqualRevenue {
        alpha: f64,
    },
    TruncatedPareto {
        alpha: f64,
        beta: f64,
    },
    UniformWithAtom {
        p1: f64,
    },
    /// Shorthand for `uniform_with_atom` with `p1 = 0`.
    Uniform,
    /// Piecewise-constant density: `masses[k]` is the mass of
    /// `[points[k], points[k+1])`.
    PiecewiseGrid {
        points: Vec<f64>,
        masses: Vec<f64>,
        #[serde(default)]
        atom_at_zero: f64,
        #[serde(default)]
        atom_at_one: f64,
    },
    PointMass {
        a: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    EqualRevenue { alpha: f64 },
    TruncatedPareto { alpha: f64, beta: f64 },
    UniformWithAtom { p1: f64 },
    Piecewise { points: Vec<f64>, densities: Vec<f64>, atom0: f64, atom1: f64 },
    PointMass { a: f64 },
}

/// A marginal value distribution on `[0, 1]`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    family: Family,
}

/// How continuous mass is assigned to grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    /// Node `x_j` carries `[x_j, x_{j+1})`; the top node carries only the atom at 1.
    Floor,
    /// Node `x_j` carries `(x_{j-1}, x_j]`; node 0 carries only the atom at 0.
    Ceil,
}

/// A marginal restricted to a value grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub grid: Grid,
    pub pmf: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn total(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn moment(&self, p: f64) -> f64 {
        self.grid.nodes().iter().zip(&self.pmf).map(|(x, m)| m * x.powf(p)).sum()
    }
}

fn unit_interval(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl Marginal {
    pub fn equal_revenue(alpha: f64) -> Result<Self, DistError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(DistError::InvalidParameter {
                family: "equal_revenue",
                detail: format!("alpha must lie in (0,1), got {alpha}"),
            });
        }
        Ok(Self { family: Family::EqualRevenue { alpha } })
    }

    pub fn truncated_pareto(alpha: f64, beta: f64) -> Result<Self, DistError> {
        if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta <= 1.0) {
            return Err(DistError::InvalidParameter {
                family: "truncated_pareto",
                detail: format!("need alpha in (0,1) and beta in (0,1], got alpha={alpha}, beta={beta}"),
            });
        }
        Ok(Self { family: Family::TruncatedPareto { alpha, beta } })
    }

    pub fn uniform_with_atom(p1: f64) -> Result<Self, DistError> {
        if !unit_interval(p1) {
            return Err(DistError::InvalidParameter {
                family: "uniform_with_atom",
                detail: format!("p1 must lie in [0,1], got {p1}"),
            });
        }
        Ok(Self { family: Family::UniformWithAtom { p1 } })
    }

    pub fn uniform() -> Self {
        Self { family: Family::UniformWithAtom { p1: 0.0 } }
    }

    /// Unit mass at `a`. This is the only way to place an atom strictly
    /// inside `(0, 1)`.
    pub fn point_mass(a: f64) -> Result<Self, DistError> {
        if !unit_interval(a) {
            return Err(DistError::InvalidParameter {
                family: "point_mass",
                detail: format!("location must lie in [0,1], got {a}"),
            });
        }
        Ok(Self { family: Family::PointMass { a } })
    }

    /// Piecewise-constant density with cell masses, plus endpoint atoms.
    pub fn piecewise(
        points: Vec<f64>,
        masses: Vec<f64>,
        atom_at_zero: f64,
        atom_at_one: f64,
    ) -> Result<Self, DistError> {
        let bad = |detail: String| DistError::InvalidParameter { family: "piecewise_grid", detail };
        if points.len() < 2 || masses.len() + 1 != points.len() {
            return Err(bad(format!(
                "need k+1 points for k cell masses, got {} points and {} masses",
                points.len(),
                masses.len()
            )));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("points must run strictly increasing from 0 to 1".into()));
        }
        if masses.iter().chain([&atom_at_zero, &atom_at_one]).any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(bad("masses and atoms must be finite and nonnegative".into()));
        }
        let total = masses.iter().sum::<f64>() + atom_at_zero + atom_at_one;
        if (total - 1.0).abs() > TOTAL_MASS_TOLERANCE {
            return Err(DistError::MassMismatch { total });
        }
        let densities = masses
            .iter()
            .zip(points.windows(2))
            .map(|(m, w)| m / (w[1] - w[0]))
            .collect();
        Ok(Self {
            family: Family::Piecewise { points, densities, atom0: atom_at_zero, atom1: atom_at_one },
        })
    }

    pub fn from_spec(spec: &MarginalSpec) -> Result<Self, DistError> {
        match spec {
            MarginalSpec::EqualRevenue { alpha } => Self::equal_revenue(*alpha),
            MarginalSpec::TruncatedPareto { alpha, beta } => Self::truncated_pareto(*alpha, *beta),
            MarginalSpec::UniformWithAtom { p1 } => Self::uniform_with_atom(*p1),
            MarginalSpec::Uniform => Ok(Self::uniform()),
            MarginalSpec::PiecewiseGrid { points, masses, atom_at_zero, atom_at_one } => {
                Self::piecewise(points.clone(), masses.clone(), *atom_at_zero, *atom_at_one)
            }
            MarginalSpec::PointMass { a } => Self::point_mass(*a),
        }
    }

    pub fn spec(&self) -> MarginalSpec {
        match &self.family {
            Family::EqualRevenue { alpha } => MarginalSpec::EqualRevenue { alpha: *alpha },
            Family::TruncatedPareto { alpha, beta } => {
                MarginalSpec::TruncatedPareto { alpha: *alpha, beta: *beta }
            }
            Family::UniformWithAtom { p1 } => MarginalSpec::UniformWithAtom { p1: *p1 },
            Family::Piecewise { points, densities, atom0, atom1 } => MarginalSpec::PiecewiseGrid {
                points: points.clone(),
                masses: densities
                    .iter()
                    .zip(points.windows(2))
                    .map(|(d, w)| d * (w[1] - w[0]))
                    .collect(),
                atom_at_zero: *atom0,
                atom_at_one: *atom1,
            },
            Family::PointMass { a } => MarginalSpec::PointMass { a: *a },
        }
    }

    pub fn family_tag(&self) -> &'static str {
        match self.family {
            Family::EqualRevenue { .. } => "equal_revenue",
            Family::TruncatedPareto { .. } => "truncated_pareto",
            Family::UniformWithAtom { .. } => "uniform_with_atom",
            Family::Piecewise { .. } => "piecewise_grid",
            Family::PointMass { .. } => "point_mass",
        }
    }

    /// True for a unit point mass (anywhere in `[0, 1]`).
    pub fn is_degenerate(&self) -> bool {
        matches!(self.family, Family::PointMass { .. })
            || self.atoms().iter().any(|&(_, m)| m >= 1.0 - TOTAL_MASS_TOLERANCE)
    }

    /// Atoms as `(location, mass)` pairs with positive mass.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let raw: Vec<(f64, f64)> = match &self.family {
            Family::EqualRevenue { alpha } => vec![(1.0, *alpha)],
            Family::TruncatedPareto { alpha, beta } => vec![(1.0, alpha.powf(*beta))],
            Family::UniformWithAtom { p1 } => vec![(1.0, *p1)],
            Family::Piecewise { atom0, atom1, .. } => vec![(0.0, *atom0), (1.0, *atom1)],
            Family::PointMass { a } => vec![(*a, 1.0)],
        };
        raw.into_iter().filter(|&(_, m)| m > 0.0).collect()
    }

    fn atom_at(&self, x: f64) -> f64 {
        self.atoms().iter().filter(|&&(loc, _)| loc == x).map(|&(_, m)| m).sum()
    }

    pub fn atom_at_zero(&self) -> f64 {
        self.atom_at(0.0)
    }

    /// The probability mass on the top value 1.
    pub fn atom_at_one(&self) -> f64 {
        self.atom_at(1.0)
    }

    /// Density of the continuous part at `x` (zero outside `(0, 1)`).
    pub fn density(&self, x: f64) -> f64 {
        if !(x > 0.0 && x < 1.0) {
            return 0.0;
        }
        match &self.family {
            Family::EqualRevenue { alpha } => {
                if x >= *alpha {
                    alpha / (x * x)
                } else {
                    0.0
                }
            }
            Family::TruncatedPareto { alpha, beta } => {
                if x >= *alpha {
                    beta * alpha.powf(*beta) * x.powf(-beta - 1.0)
                } else {
                    0.0
                }
            }
            Family::UniformWithAtom { p1 } => 1.0 - p1,
            Family::Piecewise { points, densities, .. } => {
                let k = points.partition_point(|&p| p <= x) - 1;
                densities[k.min(densities.len() - 1)]
            }
            Family::PointMass { .. } => 0.0,
        }
    }

    /// Points in `(0, 1)` where the density may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            Family::EqualRevenue { alpha } | Family::TruncatedPareto { alpha, .. } => vec![*alpha],
            Family::Piecewise { points, .. } => points[1..points.len() - 1].to_vec(),
            Family::PointMass { a } if *a > 0.0 && *a < 1.0 => vec![*a],
            _ => Vec::new(),
        }
    }

    /// Closed-form `∫_a^b s^p f(s) ds` over the continuous part, `[a, b]`
    /// clipped to `[0, 1]`. Requires `p > -1` when the density reaches zero.
    pub fn partial_moment(&self, p: f64, a: f64, b: f64) -> f64 {
        let a = a.max(0.0);
        let b = b.min(1.0);
        if b <= a {
            return 0.0;
        }
        // ∫_a^b s^e ds
        let power_integral = |e: f64, lo: f64, hi: f64| -> f64 {
            if (e + 1.0).abs() < 1e-12 {
                (hi / lo).ln()
            } else {
                (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0)
            }
        };
        match &self.family {
            Family::EqualRevenue { alpha } => {
                let lo = a.max(*alpha);
                if b <= lo {
                    0.0
                } else {
                    alpha * power_integral(p - 2.0, lo, b)
                }
            }
            Family::TruncatedPareto { alpha, beta } => {
                let lo = a.max(*alpha);
                if b <= lo {
                    0.0
                } else {
                    beta * alpha.powf(*beta) * power_integral(p - beta - 1.0, lo, b)
                }
            }
            Family::UniformWithAtom { p1 } => (1.0 - p1) * power_integral(p, a, b),
            Family::Piecewise { points, densities, .. } => points
                .windows(2)
                .zip(densities)
                .filter(|(_, d)| **d > 0.0)
                .map(|(w, d)| {
                    let lo = w[0].max(a);
                    let hi = w[1].min(b);
                    if hi > lo {
                        d * power_integral(p, lo, hi)
                    } else {
                        0.0
                    }
                })
                .sum(),
            Family::PointMass { .. } => 0.0,
        }
    }

    /// Total mass of the continuous part.
    pub fn continuous_mass(&self) -> f64 {
        self.partial_moment(0.0, 0.0, 1.0)
    }

    /// Right-continuous CDF `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let atoms: f64 = self.atoms().iter().filter(|&&(loc, _)| loc <= x).map(|&(_, m)| m).sum();
        (atoms + self.partial_moment(0.0, 0.0, x)).min(1.0)
    }

    /// Left limit `P(X < x)`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x > 1.0 {
            return 1.0;
        }
        let atoms: f64 = self.atoms().iter().filter(|&&(loc, _)| loc < x).map(|&(_, m)| m).sum();
        (atoms + self.partial_moment(0.0, 0.0, x)).min(1.0)
    }

    /// Smallest `x` with `cdf(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= self.cdf(0.0) {
            return 0.0;
        }
        if let Family::PointMass { a } = self.family {
            return a;
        }
        let q = p - self.atom_at_zero();
        if q > self.continuous_mass() {
            return 1.0;
        }
        self.continuous_inverse(q).min(1.0)
    }

    /// Smallest `x` with `∫_0^x f >= q`, for `0 < q <= continuous_mass()`.
    fn continuous_inverse(&self, q: f64) -> f64 {
        match &self.family {
            Family::EqualRevenue { alpha } => alpha / (1.0 - q),
            Family::TruncatedPareto { alpha, beta } => alpha * (1.0 - q).powf(-1.0 / beta),
            Family::UniformWithAtom { p1 } => q / (1.0 - p1),
            Family::Piecewise { points, densities, .. } => {
                let mut cum = 0.0;
                for (w, d) in points.windows(2).zip(densities) {
                    if *d <= 0.0 {
                        continue;
                    }
                    let mass = d * (w[1] - w[0]);
                    if cum + mass >= q {
                        return w[0] + (q - cum) / d;
                    }
                    cum += mass;
                }
                1.0
            }
            Family::PointMass { a } => *a,
        }
    }

    /// `∫ x^p dF(x)` over atoms and density, for `p > 0`.
    pub fn moment_power(&self, p: f64) -> f64 {
        self.moment_up_to(p, 1.0, true)
    }

    /// `∫_{[0, upto]} x^p dF` (`inclusive`) or `∫_{[0, upto)} x^p dF`.
    pub fn moment_up_to(&self, p: f64, upto: f64, inclusive: bool) -> f64 {
        let atoms: f64 = self
            .atoms()
            .iter()
            .filter(|&&(loc, _)| if inclusive { loc <= upto } else { loc < upto })
            .map(|&(loc, m)| m * loc.powf(p))
            .sum();
        atoms + self.partial_moment(p, 0.0, upto)
    }

    /// `∫_0^τ F^{-1}(u) du`: the mean contribution of the lowest `τ` of
    /// probability mass, splitting an atom at the cut if necessary.
    pub fn lower_quantile_mean(&self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        if tau == 0.0 {
            return 0.0;
        }
        let q = self.quantile(tau);
        self.moment_up_to(1.0, q, false) + q * (tau - self.cdf_left(q))
    }

    /// Restricts the marginal to `m` equispaced nodes with floor binning.
    pub fn discretize(&self, m: usize) -> Result<DiscreteMarginal, DistError> {
        self.discretize_with(m, Binning::Floor)
    }

    pub fn discretize_with(&self, m: usize, binning: Binning) -> Result<DiscreteMarginal, DistError> {
        if m < 3 {
            return Err(DistError::GridTooSmall(m));
        }
        let grid = Grid::uniform(m)?;
        Ok(self.discretize_on(&grid, binning))
    }

    pub fn discretize_on(&self, grid: &Grid, binning: Binning) -> DiscreteMarginal {
        let x = grid.nodes();
        let m = x.len();
        let mut pmf = vec![0.0; m];
        match binning {
            Binning::Floor => {
                for j in 0..m - 1 {
                    pmf[j] = self.cdf_left(x[j + 1]) - self.cdf_left(x[j]);
                }
                pmf[m - 1] = 1.0 - self.cdf_left(1.0);
            }
            Binning::Ceil => {
                pmf[0] = self.cdf(0.0);
                for j in 1..m {
                    pmf[j] = self.cdf(x[j]) - self.cdf(x[j - 1]);
                }
            }
        }
        for v in &mut pmf {
            *v = v.max(0.0);
        }
        DiscreteMarginal { grid: grid.clone(), pmf }
    }

    /// Robust-version regularity for two bidders: `x²f(x)` nondecreasing on
    /// `(0,1)` and `Pr(1) >= ∫ x²f`.
    pub fn check_regularity_2(&self) -> RegularityReport {
        let worst = self.worst_monotonicity_violation();
        let slack = self.atom_at_one() - self.partial_moment(2.0, 0.0, 1.0);
        RegularityReport::new(ConditionName::Robust2Bidder, 2, worst, slack)
    }

    /// General robust-version regularity conditions (I) or (II) for `n` bidders.
    pub fn check_general_regularity(&self, n: usize, variant: GeneralVariant) -> RegularityReport {
        assert!(n >= 2, "regularity needs at least two bidders");
        let p = exponent(n);
        let slack = self.atom_at_one() - self.partial_moment(p, 0.0, 1.0) / (n - 1) as f64;
        match variant {
            GeneralVariant::II => {
                let worst = self.worst_monotonicity_violation();
                RegularityReport::new(ConditionName::GeneralII, n, worst, slack)
            }
            GeneralVariant::I => {
                let worst = self.worst_density_floor_violation(n);
                RegularityReport::new(ConditionName::GeneralI, n, worst, slack)
            }
        }
    }

    fn worst_monotonicity_violation(&self) -> Option<Violation> {
        let mut worst: Option<Violation> = None;
        let mut note = |at: f64, magnitude: f64| {
            if magnitude > SHAPE_TOLERANCE && worst.is_none_or(|w| magnitude > w.magnitude) {
                worst = Some(Violation { at, magnitude });
            }
        };
        let mut running_max = f64::NEG_INFINITY;
        for x in sample_points() {
            let h = x * x * self.density(x);
            note(x, running_max - h);
            running_max = running_max.max(h);
        }
        // Exact check at density jumps; smooth built-in families are monotone by
        // their parameter constraints.
        if let Family::Piecewise { points, densities, .. } = &self.family {
            for (k, b) in points.iter().enumerate().take(densities.len()).skip(1) {
                note(*b, b * b * (densities[k - 1] - densities[k]));
            }
        }
        worst
    }

    fn worst_density_floor_violation(&self, n: usize) -> Option<Violation> {
        let p = exponent(n);
        let scale = 1.0 / (n - 1) as f64;
        let mut worst: Option<Violation> = None;
        for x in sample_points() {
            let floor = scale * x.powf(-1.0 - p) * self.partial_moment(p, 0.0, x);
            let gap = floor - self.density(x);
            if gap > SHAPE_TOLERANCE && worst.is_none_or(|w| gap > w.magnitude) {
                worst = Some(Violation { at: x, magnitude: gap });
            }
        }
        worst
    }
}

impl TryFrom<&MarginalSpec> for Marginal {
    type Error = DistError;

    fn try_from(spec: &MarginalSpec) -> Result<Self, Self::Error> {
        Marginal::from_spec(spec)
    }
}

/// `N / (N - 1)`.
pub fn exponent(n: usize) -> f64 {
    n as f64 / (n - 1) as f64
}

fn sample_points() -> impl Iterator<Item = f64> {
    let denom = (REGULARITY_SAMPLES + 1) as f64;
    (1..=REGULARITY_SAMPLES).map(move |k| k as f64 / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneralVariant {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionName {
    #[serde(rename = "robust_2bidder")]
    Robust2Bidder,
    #[serde(rename = "general_I")]
    GeneralI,
    #[serde(rename = "general_II")]
    GeneralII,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Violation {
    pub at: f64,
    pub magnitude: f64,
}

/// Outcome of a regularity check. For `general_I` the shape part is the
/// pointwise density floor rather than monotonicity of `x²f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityReport {
    pub condition_name: ConditionName,
    pub n_bidders: usize,
    pub monotonicity_ok: bool,
    pub worst_violation: Option<Violation>,
    pub mass_condition_ok: bool,
    /// `Pr(1)` minus the required integral; reported whether or not it passes.
    pub mass_slack: f64,
}

impl RegularityReport {
    fn new(condition_name: ConditionName, n_bidders: usize, worst: Option<Violation>, slack: f64) -> Self {
        Self {
            condition_name,
            n_bidders,
            monotonicity_ok: worst.is_none(),
            worst_violation: worst,
            mass_condition_ok: slack >= -MASS_TOLERANCE,
            mass_slack: slack,
        }
    }

    pub fn passed(&self) -> bool {
        self.monotonicity_ok && self.mass_condition_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use approx::assert_abs_diff_eq;

    fn er(alpha: f64) -> Marginal {
        Marginal::equal_revenue(alpha).unwrap()
    }

    #[test]
    fn cdf_examples() {
        assert_abs_diff_eq!(er(0.5).cdf(0.5), 0.0, epsilon = 1e-15);
        assert_eq!(Marginal::point_mass(1.0).unwrap().cdf(0.999), 0.0);
        assert_abs_diff_eq!(Marginal::uniform_with_atom(0.25).unwrap().cdf(0.5), 0.375, epsilon = 1e-15);
        assert_eq!(er(0.5).cdf(1.0), 1.0);
        let with_zero = Marginal::piecewise(vec![0.0, 1.0], vec![0.6], 0.4, 0.0).unwrap();
        assert_abs_diff_eq!(with_zero.cdf(0.0), 0.4);
        assert_eq!(with_zero.cdf_left(0.0), 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_abs_diff_eq!(Marginal::uniform().quantile(2.0 / 3.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(er(0.5).quantile(0.25), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(Marginal::point_mass(1.0).unwrap().quantile(0.5), 1.0);
        // Mass above F(1-) sits on the atom.
        assert_eq!(er(0.5).quantile(0.75), 1.0);
    }

    #[test]
    fn quantile_flat_region_returns_left_endpoint() {
        let gap = Marginal::piecewise(vec![0.0, 0.4, 0.6, 1.0], vec![0.5, 0.0, 0.5], 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(gap.quantile(0.5), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(gap.quantile(0.75), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn moment_examples() {
        assert_abs_diff_eq!(er(0.5).moment_power(2.0), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(Marginal::uniform().moment_power(1.5), 0.4, epsilon = 1e-15);
        assert_eq!(Marginal::point_mass(1.0).unwrap().moment_power(3.7), 1.0);
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        let families = [
            er(0.3),
            Marginal::truncated_pareto(0.4, 0.8).unwrap(),
            Marginal::uniform_with_atom(0.2).unwrap(),
            Marginal::piecewise(vec![0.0, 0.2, 0.7, 1.0], vec![0.1, 0.3, 0.4], 0.05, 0.15).unwrap(),
        ];
        for f in &families {
            for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
                let quadrature = quad::integrate_with_breaks(
                    |x| x.powf(p) * f.density(x),
                    0.0,
                    1.0,
                    &f.breakpoints(),
                    1e-13,
                );
                assert_abs_diff_eq!(f.partial_moment(p, 0.0, 1.0), quadrature, epsilon = 1e-9);
            }
            let total = f.continuous_mass() + f.atoms().iter().map(|a| a.1).sum::<f64>();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn regularity_2_examples() {
        assert!(er(0.5).check_regularity_2().passed());

        let atom = Marginal::uniform_with_atom(0.25).unwrap().check_regularity_2();
        assert!(atom.passed());
        assert_abs_diff_eq!(atom.mass_slack, 0.0, epsilon = 1e-15);

        let plain = Marginal::uniform().check_regularity_2();
        assert!(!plain.passed());
        assert!(plain.monotonicity_ok);
        assert_abs_diff_eq!(plain.mass_slack, -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn decreasing_density_fails_monotonicity() {
        let f = Marginal::piecewise(vec![0.0, 0.5, 1.0], vec![0.3, 0.1], 0.0, 0.6).unwrap();
        let report = f.check_regularity_2();
        assert!(!report.monotonicity_ok);
        let v = report.worst_violation.unwrap();
        assert_abs_diff_eq!(v.at, 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(v.magnitude, 0.25 * (0.6 - 0.2), epsilon = 1e-9);
    }

    #[test]
    fn general_regularity_examples() {
        let ii = er(0.5).check_general_regularity(3, GeneralVariant::II);
        assert!(ii.passed());
        assert_eq!(ii.condition_name, ConditionName::GeneralII);
        let tp = Marginal::truncated_pareto(0.4, 0.8).unwrap();
        assert!(tp.check_general_regularity(2, GeneralVariant::II).passed());
        assert!(tp.check_general_regularity(2, GeneralVariant::I).passed());
        let unif = Marginal::uniform().check_general_regularity(3, GeneralVariant::I);
        assert!(unif.monotonicity_ok);
        assert!(!unif.mass_condition_ok);
        assert_abs_diff_eq!(unif.mass_slack, -0.2, epsilon = 1e-15);
    }

    #[test]
    fn discretize_examples() {
        let pm = Marginal::point_mass(1.0).unwrap().discretize(5).unwrap();
        assert_eq!(pm.pmf, vec![0.0, 0.0, 0.0, 0.0, 1.0]);

        for m in [3, 7, 60] {
            let d = er(0.5).discretize(m).unwrap();
            assert_abs_diff_eq!(d.pmf[m - 1], 0.5, epsilon = 1e-15);
        }

        let u = Marginal::uniform().discretize(11).unwrap();
        for j in 0..10 {
            assert_abs_diff_eq!(u.pmf[j], 0.1, epsilon = 1e-15);
        }
        assert_eq!(u.pmf[10], 0.0);
        assert_eq!(Marginal::uniform().discretize(2), Err(DistError::GridTooSmall(2)));
    }

    #[test]
    fn ceil_binning_partial_sums_match_cdf() {
        let f = Marginal::uniform_with_atom(0.3).unwrap();
        let d = f.discretize_with(9, Binning::Ceil).unwrap();
        let mut acc = 0.0;
        for (x, p) in d.grid.nodes().iter().zip(&d.pmf) {
            acc += p;
            assert_abs_diff_eq!(acc, f.cdf(*x), epsilon = 1e-14);
        }
    }

    #[test]
    fn lower_quantile_mean_splits_atoms() {
        assert_abs_diff_eq!(Marginal::point_mass(1.0).unwrap().lower_quantile_mean(0.5), 0.5);
        assert_abs_diff_eq!(Marginal::uniform().lower_quantile_mean(0.5), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Marginal::equal_revenue(1.0).is_err());
        assert!(Marginal::truncated_pareto(0.5, 1.5).is_err());
        assert!(Marginal::uniform_with_atom(-0.1).is_err());
        assert!(matches!(
            Marginal::piecewise(vec![0.0, 1.0], vec![0.5], 0.0, 0.0),
            Err(DistError::MassMismatch { .. })
        ));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: MarginalSpec = serde_json::from_str(r#"{"family":"equal_revenue","alpha":0.5}"#).unwrap();
        assert_eq!(Marginal::from_spec(&spec).unwrap(), er(0.5));
        let uniform: MarginalSpec = serde_json::from_str(r#"{"family":"uniform"}"#).unwrap();
        assert_eq!(uniform, MarginalSpec::Uniform);
        assert!(serde_json::from_str::<MarginalSpec>(r#"{"family":"equal_revenue"}"#).is_err());
        assert!(serde_json::from_str::<MarginalSpec>(r#"{"family":"equal_revenue","alpha":0.5,"x":1}"#).is_err());
    }
}
