mod common;

use approx::assert_abs_diff_eq;
use maxmin_core::duality::nature_worst_case_pmf;
use maxmin_core::guar::{
    beta_r_lower_bound, dominance_report, guarantee_beta, guarantee_posted_price, guarantee_spa_plain,
    revenue_curve_concave, Validity,
};
use maxmin_core::{Binning, Marginal, Mechanism};
use rand::Rng;

/// Floor and ceil grid LPs of a second-price kind bracket its continuum worst case.
fn bracket(mech: &Mechanism, f: &Marginal, n: usize, m: usize) -> (f64, f64) {
    let lo = nature_worst_case_pmf(mech, &f.discretize_with(m, Binning::Floor).unwrap(), n).unwrap();
    let hi = nature_worst_case_pmf(mech, &f.discretize_with(m, Binning::Ceil).unwrap(), n).unwrap();
    (lo.primal_value, hi.primal_value)
}

#[test]
fn capped_bound_never_exceeds_the_ceil_lp() {
    let mut rng = common::rng(51);
    for k in 0..8 {
        let f = common::random_marginal(&mut rng);
        let (n, m) = if k % 2 == 0 { (2, 60) } else { (3, 12) };
        let r = rng.gen_range(0.2..1.0);
        let bound = beta_r_lower_bound(&f, n, r).unwrap();
        let (_, hi) = bracket(&Mechanism::spa_capped_beta(n, r).unwrap(), &f, n, m);
        assert!(bound <= hi + 1e-9, "n={n} r={r}: {bound} > {hi}");
    }
}

#[test]
fn spa_plain_closed_form_inside_the_bracket() {
    let mut rng = common::rng(52);
    for k in 0..6 {
        let f = common::random_marginal(&mut rng);
        let (n, m) = if k % 2 == 0 { (2, 80) } else { (3, 15) };
        let value = guarantee_spa_plain(&f, n).unwrap().guarantee_value;
        let (lo, hi) = bracket(&Mechanism::spa_plain(n).unwrap(), &f, n, m);
        assert!(lo - 1e-9 <= value && value <= hi + 1e-9, "n={n}: {lo} {value} {hi}");
    }
}

#[test]
fn exact_beta_guarantees_inside_the_bracket() {
    let mut rng = common::rng(53);
    for _ in 0..6 {
        let f = common::random_marginal(&mut rng);
        let report = guarantee_beta(&f, 2).unwrap();
        assert_eq!(report.validity, Validity::Exact);
        let (lo, hi) = bracket(&Mechanism::spa_beta_reserve(2).unwrap(), &f, 2, 60);
        assert!(lo - 1e-9 <= report.guarantee_value && report.guarantee_value <= hi + 1e-9);
    }
    let f = Marginal::truncated_pareto(0.4, 0.8).unwrap();
    let report = guarantee_beta(&f, 3).unwrap();
    let (lo, hi) = bracket(&Mechanism::spa_beta_reserve(3).unwrap(), &f, 3, 20);
    assert!(lo - 1e-9 <= report.guarantee_value && report.guarantee_value <= hi + 1e-9);
}

#[test]
fn posted_price_matches_a_price_scan() {
    let mut rng = common::rng(54);
    for _ in 0..10 {
        let f = common::random_marginal(&mut rng);
        let report = guarantee_posted_price(&f);
        let scan = (1..=100_000)
            .map(|k| {
                let p = k as f64 / 100_000.0;
                p * (1.0 - f.cdf_left(p))
            })
            .fold(0.0, f64::max);
        assert!(report.guarantee_value >= scan - 1e-12);
        assert!(report.guarantee_value <= scan + 1e-4);
        let p = report.parameter.unwrap();
        assert_abs_diff_eq!(report.guarantee_value, p * (1.0 - f.cdf_left(p)), epsilon = 1e-12);
    }
}

#[test]
fn strict_dominance_on_random_marginals() {
    let mut rng = common::rng(55);
    for _ in 0..5 {
        let f = common::random_marginal(&mut rng);
        let report = dominance_report(&f, 2).unwrap();
        assert!(report.all_hold(), "{}", report.to_csv());
    }
}

#[test]
fn revenue_curve_concavity() {
    assert!(revenue_curve_concave(&Marginal::uniform()));
    assert!(revenue_curve_concave(&Marginal::equal_revenue(0.5).unwrap()));
    // Most mass near 0 and 1 with a flat middle gives a convex kink at 0.1.
    let bimodal = Marginal::piecewise(vec![0.0, 0.1, 0.9, 1.0], vec![0.6, 0.0, 0.4], 0.0, 0.0).unwrap();
    assert!(!revenue_curve_concave(&bimodal));
}
