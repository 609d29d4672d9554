//! Revenue guarantees of the benchmark mechanisms, the capped-beta lower
//! bound with its optimal cap, and robust-dominance comparisons.

use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{exponent, GeneralVariant, Marginal};
use crate::duality::{grid_cap, nature_worst_case, LpError};
use crate::fmt17;
use crate::mech::{MechError, Mechanism};

/// Coarse points for one-dimensional maximizations.
pub const SEARCH_POINTS: usize = 1001;
/// Golden-section stopping width for the cap search.
pub const R_STAR_TOLERANCE: f64 = 1e-6;
/// Margin for strict robust-dominance inequalities.
pub const DOMINANCE_MARGIN: f64 = 1e-9;
/// Accepted residual of the reserve fixed-point equation.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuarError {
    #[error("cap r must lie in (0, 1], got {0}")]
    InvalidCap(f64),
    #[error("at least 2 bidders are required, got {0}")]
    TooFewBidders(usize),
    #[error(transparent)]
    Mech(#[from] MechError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    DualBound,
    LpEstimate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Exact,
    LowerBound,
    RequiresConditions(String),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed_form",
            Method::DualBound => "dual_bound",
            Method::LpEstimate => "lp_estimate",
        })
    }
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Validity::Exact => f.write_str("exact"),
            Validity::LowerBound => f.write_str("lower_bound"),
            Validity::RequiresConditions(name) => write!(f, "requires_conditions({name})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuaranteeReport {
    pub mechanism_tag: String,
    pub n_bidders: usize,
    pub guarantee_value: f64,
    pub method: Method,
    pub validity: Validity,
    /// Price, reserve or cap at which the value is attained, when relevant.
    pub parameter: Option<f64>,
    /// `|value − LP estimate|` when both are available.
    pub crosscheck_residual: Option<f64>,
}

impl GuaranteeReport {
    fn new(tag: &str, n: usize, value: f64, method: Method, validity: Validity) -> Self {
        Self {
            mechanism_tag: tag.to_string(),
            n_bidders: n,
            guarantee_value: value,
            method,
            validity,
            parameter: None,
            crosscheck_residual: None,
        }
    }

    fn at(mut self, parameter: f64) -> Self {
        self.parameter = Some(parameter);
        self
    }

    /// Records the distance to an LP estimate of the same quantity.
    pub fn crosscheck(&mut self, lp_value: f64) {
        self.crosscheck_residual = Some((self.guarantee_value - lp_value).abs());
    }
}

/// CSV table with columns `mechanism,n,value,method,validity,parameter`.
pub fn reports_to_csv(reports: &[GuaranteeReport]) -> String {
    let mut out = String::from("mechanism,n,value,method,validity,parameter\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},\"{}\",{}",
            r.mechanism_tag,
            r.n_bidders,
            fmt17(r.guarantee_value),
            r.method,
            r.validity,
            r.parameter.map(fmt17).unwrap_or_default()
        );
    }
    out
}

fn check_n(n: usize) -> Result<(), GuarError> {
    if n < 2 {
        Err(GuarError::TooFewBidders(n))
    } else {
        Ok(())
    }
}

/// Two-bidder second-price auction with a uniform reserve: `E[X²]` under
/// every coupling.
pub fn guarantee_full_insurance(f: &Marginal) -> GuaranteeReport {
    GuaranteeReport::new("spa_uniform_reserve", 2, f.moment_power(2.0), Method::ClosedForm, Validity::Exact)
}

/// Second-price auction with a `Beta(1/(N−1), 1)` reserve: `E[X^{N/(N−1)}]`.
/// Exact for two bidders and whenever conditions (I) hold; otherwise a
/// lower bound certified by the closed-form dual.
pub fn guarantee_beta(f: &Marginal, n: usize) -> Result<GuaranteeReport, GuarError> {
    check_n(n)?;
    let value = f.moment_power(exponent(n));
    let exact = n == 2 || f.check_general_regularity(n, GeneralVariant::I).passed();
    Ok(if exact {
        GuaranteeReport::new("spa_beta_reserve", n, value, Method::ClosedForm, Validity::Exact)
    } else {
        GuaranteeReport::new("spa_beta_reserve", n, value, Method::DualBound, Validity::LowerBound)
    })
}

fn posted_revenue(f: &Marginal, x: f64) -> f64 {
    x * (1.0 - f.cdf_left(x))
}

/// Golden-section maximization of `g` on `[a, b]`; returns the best point seen.
fn golden_max<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    while b - a > tol {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d);
        }
    }
    let candidates = [(a, g(a)), (c, gc), (d, gd), (b, g(b))];
    candidates.into_iter().fold((a, f64::NEG_INFINITY), |best, p| if p.1 >= best.1 { p } else { best })
}

/// Best posted price: `max_x x · P(X ≥ x)`, atoms at the price included.
pub fn guarantee_posted_price(f: &Marginal) -> GuaranteeReport {
    let step = 1.0 / (SEARCH_POINTS - 1) as f64;
    let mut candidates: Vec<f64> = (0..SEARCH_POINTS).map(|k| k as f64 * step).collect();
    candidates.extend(f.atoms().iter().map(|&(loc, _)| loc));
    candidates.extend(f.breakpoints());
    let mut best = (0.0, 0.0);
    for &x in &candidates {
        let v = posted_revenue(f, x);
        if v > best.1 {
            best = (x, v);
        }
    }
    // Refine on the continuous part around the coarse maximizer.
    let (lo, hi) = ((best.0 - step).max(0.0), (best.0 + step).min(1.0));
    let refined = golden_max(|x| posted_revenue(f, x), lo, hi, 1e-10);
    if refined.1 > best.1 {
        best = refined;
    }
    GuaranteeReport::new("posted_price", 1, best.1, Method::ClosedForm, Validity::Exact).at(best.0)
}

/// `∫_{u}^{w} F^{-1}(s) ds`.
fn quantile_mean(f: &Marginal, u: f64, w: f64) -> f64 {
    f.lower_quantile_mean(w) - f.lower_quantile_mean(u)
}

/// Second-price auction without reserve:
/// `N/(N−1) · ∫_0^{F^{-1}((N−1)/N)} x dF`, atoms split at the quantile.
pub fn guarantee_spa_plain(f: &Marginal, n: usize) -> Result<GuaranteeReport, GuarError> {
    check_n(n)?;
    let nf = n as f64;
    let tau = (nf - 1.0) / nf;
    let value = nf / (nf - 1.0) * f.lower_quantile_mean(tau);
    Ok(GuaranteeReport::new("spa_plain", n, value, Method::ClosedForm, Validity::Exact).at(f.quantile(tau)))
}

/// A solution of the reserve fixed-point equation and the value it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReserve {
    pub reserve: f64,
    pub upper: f64,
    pub value: f64,
    pub equation_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetReserveGuarantee {
    /// Grid-LP minimax over node reserves; `None` beyond the LP size caps.
    pub minimax: Option<GuaranteeReport>,
    pub grid: Option<usize>,
    /// The fixed-point formula, when the equation has a solution.
    pub fixed_point: Option<FixedPointReserve>,
    /// `|fixed-point value − minimax value|` when both exist.
    pub residual: Option<f64>,
}

impl DetReserveGuarantee {
    /// The authoritative report: the minimax when available, otherwise the
    /// fixed-point formula.
    pub fn report(&self, n: usize) -> Option<GuaranteeReport> {
        if let Some(r) = &self.minimax {
            return Some(r.clone());
        }
        self.fixed_point.as_ref().map(|fp| {
            GuaranteeReport::new("spa_deterministic_reserve", n, fp.value, Method::ClosedForm, Validity::Exact)
                .at(fp.reserve)
        })
    }
}

/// Default grid for the reserve minimax.
pub fn det_reserve_grid(n: usize) -> Option<usize> {
    match n {
        2 => Some(80),
        3 => Some(20),
        4 => Some(10),
        _ => None,
    }
}

fn fixed_point_residual(f: &Marginal, n: usize, r: f64) -> f64 {
    let nf = n as f64;
    f.cdf((nf * r).min(1.0)) - f.cdf((nf - 1.0 + f.cdf(r)) / nf)
}

/// Solves `F(N r) = F((N − 1 + F(r)) / N)` by scanning and bisection and
/// returns the root with the largest implied value
/// `N/(N−1) · ∫_{F(r)}^{(N−1+F(r))/N} F^{-1}`.
pub fn det_reserve_fixed_point(f: &Marginal, n: usize) -> Option<FixedPointReserve> {
    let nf = n as f64;
    let h = |r: f64| fixed_point_residual(f, n, r);
    let steps = 10 * (SEARCH_POINTS - 1);
    let xs: Vec<f64> = (1..=steps).map(|k| k as f64 / steps as f64).collect();
    let mut roots = Vec::new();
    let mut prev = (xs[0], h(xs[0]));
    if prev.1.abs() <= FIXED_POINT_TOLERANCE {
        roots.push(prev.0);
    }
    for &x in &xs[1..] {
        let cur = (x, h(x));
        if cur.1.abs() <= FIXED_POINT_TOLERANCE {
            roots.push(x);
        } else if prev.1.abs() > FIXED_POINT_TOLERANCE && prev.1.signum() != cur.1.signum() {
            let (mut a, mut b) = (prev.0, cur.0);
            let sa = prev.1.signum();
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if h(mid).signum() == sa {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let mid = 0.5 * (a + b);
            if h(mid).abs() <= FIXED_POINT_TOLERANCE {
                roots.push(mid);
            }
        }
        prev = cur;
    }
    roots
        .into_iter()
        .map(|r| {
            let lo = f.cdf(r);
            let hi = (nf - 1.0 + lo) / nf;
            FixedPointReserve {
                reserve: r,
                upper: f.quantile(hi),
                value: nf / (nf - 1.0) * quantile_mean(f, lo, hi),
                equation_residual: h(r).abs(),
            }
        })
        .fold(None, |best: Option<FixedPointReserve>, c| match best {
            Some(b) if b.value >= c.value => Some(b),
            _ => Some(c),
        })
}

/// Worst case of the second-price auction with the best deterministic
/// reserve: the fixed-point formula, and the grid-LP minimax over node
/// reserves which is authoritative.
pub fn guarantee_spa_det_reserve(f: &Marginal, n: usize) -> Result<DetReserveGuarantee, GuarError> {
    check_n(n)?;
    guarantee_spa_det_reserve_on(f, n, det_reserve_grid(n))
}

pub fn guarantee_spa_det_reserve_on(
    f: &Marginal,
    n: usize,
    m: Option<usize>,
) -> Result<DetReserveGuarantee, GuarError> {
    check_n(n)?;
    let fixed_point = det_reserve_fixed_point(f, n);
    let m = m.filter(|&m| grid_cap(n).is_some_and(|cap| m <= cap));
    let minimax = match m {
        Some(m) => {
            let d = f.discretize(m).map_err(LpError::from)?;
            let values: Vec<Result<(f64, f64), GuarError>> = d
                .grid
                .nodes()
                .par_iter()
                .map(|&r| {
                    let mech = Mechanism::spa_deterministic_reserve(n, r)?;
                    Ok((r, nature_worst_case(&mech, f, n, m)?.primal_value))
                })
                .collect();
            let mut best = (0.0, f64::NEG_INFINITY);
            for v in values {
                let (r, value) = v?;
                if value > best.1 {
                    best = (r, value);
                }
            }
            Some(
                GuaranteeReport::new("spa_deterministic_reserve", n, best.1, Method::LpEstimate, Validity::Exact)
                    .at(best.0),
            )
        }
        None => None,
    };
    let residual = match (&minimax, &fixed_point) {
        (Some(a), Some(b)) => Some((a.guarantee_value - b.value).abs()),
        _ => None,
    };
    Ok(DetReserveGuarantee { minimax, grid: m, fixed_point, residual })
}

/// Lower bound on the worst case of the capped-beta auction with cap `r`:
/// `∫_{[0,r]} x^{N/(N−1)} / r^{1/(N−1)} dF + r · P(X > r)`.
pub fn beta_r_lower_bound(f: &Marginal, n: usize, r: f64) -> Result<f64, GuarError> {
    check_n(n)?;
    if !(r > 0.0 && r <= 1.0) {
        return Err(GuarError::InvalidCap(r));
    }
    Ok(bound_at(f, n, r))
}

fn bound_at(f: &Marginal, n: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    f.moment_up_to(exponent(n), r, true) / r.powf(1.0 / (n - 1) as f64) + r * (1.0 - f.cdf(r))
}

/// Maximizer of the capped-beta lower bound over `(0, 1]`, ties toward the
/// larger cap.
pub fn optimize_r_star(f: &Marginal, n: usize) -> Result<(f64, f64), GuarError> {
    check_n(n)?;
    let step = 1.0 / (SEARCH_POINTS - 1) as f64;
    let values: Vec<(f64, f64)> = (1..SEARCH_POINTS)
        .into_par_iter()
        .map(|k| {
            let r = k as f64 * step;
            (r, bound_at(f, n, r))
        })
        .collect();
    let mut best = values[0];
    for &(r, v) in &values {
        if v >= best.1 {
            best = (r, v);
        }
    }
    let lo = (best.0 - step).max(step * 1e-3);
    let hi = (best.0 + step).min(1.0);
    let refined = golden_max(|r| bound_at(f, n, r), lo, hi, R_STAR_TOLERANCE);
    if refined.1 > best.1 {
        best = refined;
    }
    Ok(best)
}

/// The capped-beta auction at `r*` as a report.
pub fn guarantee_capped_beta_r_star(f: &Marginal, n: usize) -> Result<GuaranteeReport, GuarError> {
    let (r, value) = optimize_r_star(f, n)?;
    Ok(GuaranteeReport::new("spa_capped_beta", n, value, Method::DualBound, Validity::LowerBound).at(r))
}

/// Whether `x (1 − F(x))` has nonpositive sampled second differences.
pub fn revenue_curve_concave(f: &Marginal) -> bool {
    let k = SEARCH_POINTS;
    let h = 1.0 / (k + 1) as f64;
    let r: Vec<f64> = (1..=k).map(|j| {
        let x = j as f64 * h;
        x * (1.0 - f.cdf(x))
    }).collect();
    r.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] <= 1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub name: String,
    /// Left side minus right side.
    pub margin: f64,
    pub holds: bool,
    /// Strictness not required (degenerate marginal or missing benchmark).
    pub waived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub n_bidders: usize,
    pub rows: Vec<GuaranteeReport>,
    pub checks: Vec<DominanceCheck>,
    pub revenue_concave: bool,
    pub degenerate: bool,
}

impl DominanceReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds || c.waived)
    }

    pub fn to_csv(&self) -> String {
        reports_to_csv(&self.rows)
    }
}

fn strict(name: &str, lhs: f64, rhs: f64, degenerate: bool) -> DominanceCheck {
    let margin = lhs - rhs;
    let holds = if degenerate { margin >= -DOMINANCE_MARGIN } else { margin > DOMINANCE_MARGIN };
    DominanceCheck { name: name.to_string(), margin, holds, waived: degenerate }
}

/// Guarantees of the benchmark mechanisms next to the capped-beta bound at
/// `r*`, with the strict-dominance checks and, for a concave revenue curve,
/// weak dominance of the beta auction over the posted price.
pub fn dominance_report(f: &Marginal, n: usize) -> Result<DominanceReport, GuarError> {
    check_n(n)?;
    let degenerate = f.is_degenerate();
    let posted = guarantee_posted_price(f);
    let plain = guarantee_spa_plain(f, n)?;
    let det = guarantee_spa_det_reserve(f, n)?.report(n);
    let beta = guarantee_beta(f, n)?;
    let capped = guarantee_capped_beta_r_star(f, n)?;
    let concave = revenue_curve_concave(f);

    let mut checks = vec![strict("capped_beta_over_posted_price", capped.guarantee_value, posted.guarantee_value, degenerate)];
    match &det {
        Some(d) => checks.push(strict(
            "capped_beta_over_det_reserve",
            capped.guarantee_value,
            d.guarantee_value,
            degenerate,
        )),
        None => checks.push(DominanceCheck {
            name: "capped_beta_over_det_reserve".into(),
            margin: f64::NAN,
            holds: false,
            waived: true,
        }),
    }
    if concave {
        let margin = beta.guarantee_value - posted.guarantee_value;
        checks.push(DominanceCheck {
            name: "beta_over_posted_price_concave".into(),
            margin,
            holds: margin >= -DOMINANCE_MARGIN,
            waived: false,
        });
    }
    let mut rows = vec![posted, plain];
    rows.extend(det);
    rows.push(beta);
    rows.push(capped);
    Ok(DominanceReport { n_bidders: n, rows, checks, revenue_concave: concave, degenerate })
}
