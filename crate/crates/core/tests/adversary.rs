mod common;

use approx::assert_abs_diff_eq;
use maxmin_core::adversary::{
    build_adversarial_2, build_adversarial_n, comonotone, expected_payment, interbidder_monotone_check,
    virtual_values, AdversaryError, FeasibilityWitness, VIRTUAL_TOLERANCE,
};
use maxmin_core::duality::nature_worst_case;
use maxmin_core::guar::guarantee_beta;
use maxmin_core::{Marginal, Mechanism};

#[test]
fn comonotone_virtual_values_are_the_values() {
    let f = Marginal::truncated_pareto(0.3, 0.7).unwrap();
    for n in 2..=3 {
        let j = comonotone(&f, n, 20).unwrap();
        let field = virtual_values(&j);
        for (idx, phis) in field.iter() {
            for (k, phi) in idx.iter().zip(phis) {
                assert_abs_diff_eq!(*phi, j.grid().node(*k), epsilon = 1e-15);
            }
        }
    }
}

#[test]
fn uniform_reserve_revenue_is_coupling_free_on_the_grid() {
    let f = Marginal::equal_revenue(0.4).unwrap();
    let d = f.discretize(40).unwrap();
    let mech = Mechanism::spa_uniform_reserve(2).unwrap();
    let second_moment = d.moment(2.0);
    let adv = build_adversarial_2(&f, 40).unwrap();
    let lp = nature_worst_case(&mech, &f, 2, 40).unwrap();
    let como = comonotone(&f, 2, 40).unwrap();
    for j in [&adv.joint, &lp.optimal_coupling, &como] {
        assert_abs_diff_eq!(expected_payment(&mech, j), second_moment, epsilon = 1e-12);
    }
    let mut rng = common::rng(41);
    for _ in 0..10 {
        let j = common::random_coupling(&d, 2, 3, &mut rng);
        assert_abs_diff_eq!(expected_payment(&mech, &j), second_moment, epsilon = 1e-12);
    }
}

#[test]
fn three_bidder_structure_lives_on_v_plus() {
    let f = Marginal::truncated_pareto(0.4, 0.8).unwrap();
    let adv = build_adversarial_n(&f, 3, 20).unwrap();
    let d = f.discretize(20).unwrap();
    assert!(adv.joint.marginal_error(&d.pmf) <= 1e-10);
    for (idx, _) in adv.joint.support() {
        let top = *idx.iter().max().unwrap();
        let lower: Vec<usize> = idx.iter().copied().filter(|&k| k != top).collect();
        assert!(lower.windows(2).all(|w| w[0] == w[1]), "{idx:?}");
    }
    let report = interbidder_monotone_check(&virtual_values(&adv.joint), VIRTUAL_TOLERANCE);
    assert!(report.violations.is_empty());
}

#[test]
fn beta_revenue_on_the_structure_approaches_the_guarantee() {
    let f = Marginal::equal_revenue(0.5).unwrap();
    let target = guarantee_beta(&f, 3).unwrap().guarantee_value;
    let mech = Mechanism::spa_beta_reserve(3).unwrap();
    let errors: Vec<f64> = [10, 20, 40]
        .iter()
        .map(|&m| (expected_payment(&mech, &build_adversarial_n(&f, 3, m).unwrap().joint) - target).abs())
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 1e-2);
}

#[test]
fn decreasing_density_names_where_it_fails() {
    // Mass concentrated near zero makes x²f(x) fall on (0.2, 1).
    let f = Marginal::piecewise(vec![0.0, 0.2, 1.0], vec![0.6, 0.1], 0.0, 0.3).unwrap();
    match build_adversarial_2(&f, 30) {
        Err(AdversaryError::Infeasible(fail)) => match fail.witness {
            FeasibilityWitness::NegativeDensity { at, value } => {
                assert!(value < 0.0);
                assert!(at > 0.0 && at < 1.0);
            }
            other => panic!("unexpected witness {other:?}"),
        },
        other => panic!("expected infeasible, got {other:?}"),
    }
}
