//! Correlation-robust (maxmin) auction toolkit.
//!
//! Marginals on `[0, 1]`, mechanisms with Myerson payments, adversarial
//! couplings and their virtual-value fields, worst-case coupling LPs with dual
//! certificates, and closed-form revenue guarantees.

pub mod adversary;
pub mod dist;
pub mod duality;
pub mod grid;
pub mod guar;
pub mod mech;
pub mod quad;

pub use dist::{Binning, DiscreteMarginal, DistError, Marginal, MarginalSpec, RegularityReport};
pub use grid::{Grid, GridError};
pub use mech::{Mechanism, MechanismSpec, ReserveDistribution, ReserveSpec};

/// Formats like C's `%.17g`: 17 significant digits, trailing zeros trimmed.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.16e}");
    let (_, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let (mantissa, _) = sci.split_once('e').unwrap();
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
