use std::fmt::Write as _;

use maxmin_core::adversary::{
    build_adversarial_2, build_adversarial_n, expected_payment, expected_virtual_surplus, interbidder_monotone_check,
    virtual_values, Adversarial, AdversaryError, FeasibilityFailure,
};
use maxmin_core::dist::{ConditionName, GeneralVariant, RegularityReport};
use maxmin_core::duality::{
    best_response_bound, grid_cap, nature_worst_case, nature_worst_case_pmf, verify_dual, LpError, LpSummary,
    GAP_TOLERANCE,
};
use maxmin_core::guar::{
    beta_r_lower_bound, dominance_report, guarantee_beta, guarantee_full_insurance, guarantee_posted_price,
    guarantee_spa_det_reserve, guarantee_spa_plain, reports_to_csv, DetReserveGuarantee, DominanceReport,
    GuaranteeReport, Method, Validity,
};
use maxmin_core::{fmt17, Binning, Marginal, Mechanism, MechanismSpec, ReserveSpec};
use serde::{Deserialize, Serialize};

use crate::config::Run;
use crate::{CliError, Format, Outcome};

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

fn outcome<T: Serialize>(name: &str, value: &T, csv: String, format: Format, exit: i32) -> Outcome {
    let body = json(value);
    let stdout = match format {
        Format::Json => body.clone(),
        Format::Csv => csv,
    };
    Outcome { stdout, stderr: String::new(), files: vec![(format!("{name}.json"), body)], exit }
}

fn lp_input(e: LpError) -> CliError {
    CliError::Input(format!("worst-case solve: {e}"))
}

// ---------------------------------------------------------------- check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckOutput {
    pub n_bidders: usize,
    pub requested: ConditionName,
    pub passed: bool,
    pub reports: Vec<RegularityReport>,
}

pub fn check(run: &Run, format: Format) -> Result<Outcome, CliError> {
    let f = &run.marginal;
    let mut reports = Vec::new();
    if run.n == 2 {
        reports.push(f.check_regularity_2());
    }
    reports.push(f.check_general_regularity(run.n, GeneralVariant::I));
    reports.push(f.check_general_regularity(run.n, GeneralVariant::II));
    let passed = reports.iter().find(|r| r.condition_name == run.condition).is_some_and(|r| r.passed());
    let out = CheckOutput { n_bidders: run.n, requested: run.condition, passed, reports };

    let mut csv = String::from("condition,n,passed,monotonicity_ok,mass_condition_ok,mass_slack,worst_at,worst_magnitude\n");
    for r in &out.reports {
        let name = serde_json::to_value(r.condition_name).expect("condition name");
        let (at, mag) = r.worst_violation.map_or((String::new(), String::new()), |v| (fmt17(v.at), fmt17(v.magnitude)));
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{at},{mag}",
            name.as_str().unwrap_or_default(),
            r.n_bidders,
            r.passed(),
            r.monotonicity_ok,
            r.mass_condition_ok,
            fmt17(r.mass_slack)
        );
    }
    Ok(outcome("check", &out, csv, format, if passed { 0 } else { 2 }))
}

// ------------------------------------------------------------ adversary

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfeasibleOutput {
    pub command: String,
    pub n_bidders: usize,
    pub location: f64,
    pub failure: FeasibilityFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evaluation {
    pub mechanism: String,
    pub expected_payment: f64,
    pub expected_virtual_surplus: f64,
    pub best_response_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryOutput {
    pub n_bidders: usize,
    pub grid_size: usize,
    pub top_atom: f64,
    pub grid_top_atom: f64,
    pub origin_mass: f64,
    pub support_cells: usize,
    pub marginal_error: f64,
    /// Largest `|φ|` of a highest bidder below the top node.
    pub max_abs_phi_high_off_top: f64,
    pub interbidder_violations: usize,
    pub interbidder_findings: usize,
    pub evaluation: Option<Evaluation>,
}

fn build_structure(f: &Marginal, n: usize, m: usize) -> Result<Adversarial, AdversaryError> {
    if n == 2 {
        build_adversarial_2(f, m)
    } else {
        build_adversarial_n(f, n, m)
    }
}

fn infeasible(command: &str, failure: FeasibilityFailure, format: Format) -> Outcome {
    let out =
        InfeasibleOutput { command: command.into(), n_bidders: failure.n_bidders, location: failure.location(), failure };
    let csv = format!("command,n,location,top_atom\n{},{},{},{}\n", command, out.n_bidders, fmt17(out.location), fmt17(out.failure.top_atom));
    let mut o = outcome(command, &out, csv, format, 3);
    o.stderr = format!("infeasible adversarial structure: witness at {}\n", fmt17(out.location));
    o
}

pub fn adversary(run: &Run, format: Format) -> Result<Outcome, CliError> {
    let f = &run.marginal;
    let adv = match build_structure(f, run.n, run.grid) {
        Ok(a) => a,
        Err(AdversaryError::Infeasible(fail)) => return Ok(infeasible("adversary", fail, format)),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    let d = f.discretize(run.grid).map_err(|e| CliError::Input(e.to_string()))?;
    let field = virtual_values(&adv.joint);
    let inter = interbidder_monotone_check(&field, run.tolerances.virtual_value);
    let evaluation = run.mechanism.as_ref().map(|mech| Evaluation {
        mechanism: mech.kind_tag().to_string(),
        expected_payment: expected_payment(mech, &adv.joint),
        expected_virtual_surplus: expected_virtual_surplus(mech, &adv.joint),
        best_response_bound: best_response_bound(&adv.joint),
    });
    let out = AdversaryOutput {
        n_bidders: run.n,
        grid_size: run.grid,
        top_atom: adv.density.top_atom(),
        grid_top_atom: adv.grid_top_atom,
        origin_mass: adv.density.origin_mass(),
        support_cells: adv.joint.support_len(),
        marginal_error: adv.joint.marginal_error(&d.pmf),
        max_abs_phi_high_off_top: field.max_high_phi_off_top(),
        interbidder_violations: inter.violations.len(),
        interbidder_findings: inter.findings.len(),
        evaluation,
    };
    let coupling = adv.joint.to_csv();
    let mut curves = String::from("x,f,recovered_f,c,g\n");
    for k in 1..200 {
        let x = k as f64 / 200.0;
        let a = &adv.density;
        let _ = writeln!(
            curves,
            "{},{},{},{},{}",
            fmt17(x),
            fmt17(f.density(x)),
            fmt17(a.recovered_marginal_density(x)),
            fmt17(a.c(x)),
            fmt17(a.g(x))
        );
    }
    let mut o = outcome("adversary", &out, coupling.clone(), format, 0);
    o.files.push(("adversary_coupling.csv".into(), coupling));
    o.files.push(("adversary_curves.csv".into(), curves));
    Ok(o)
}

// ----------------------------------------------------------- worst-case

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorstCaseOutput {
    pub mechanism: String,
    pub n_bidders: usize,
    pub grid_size: usize,
    pub lp: LpSummary,
    pub iterations: usize,
    pub support_cells: usize,
    pub marginal_error: f64,
    pub dual_feasible: bool,
    pub dual_max_violation: f64,
}

pub fn worst_case(run: &Run, format: Format) -> Result<Outcome, CliError> {
    let mech = run.require_mechanism()?;
    let lp = nature_worst_case(mech, &run.marginal, run.n, run.grid).map_err(lp_input)?;
    let d = run.marginal.discretize(run.grid).map_err(|e| CliError::Input(e.to_string()))?;
    let check = verify_dual(&lp.dual, mech, &d.grid);
    let out = WorstCaseOutput {
        mechanism: mech.kind_tag().to_string(),
        n_bidders: run.n,
        grid_size: run.grid,
        lp: lp.summary(),
        iterations: lp.iterations,
        support_cells: lp.optimal_coupling.support_len(),
        marginal_error: lp.optimal_coupling.marginal_error(&d.pmf),
        dual_feasible: check.feasible,
        dual_max_violation: check.max_violation,
    };
    let mut dual = String::from("node,value");
    for i in 1..=run.n {
        let _ = write!(dual, ",lambda{i}");
    }
    dual.push('\n');
    for (k, &x) in d.grid.nodes().iter().enumerate() {
        let _ = write!(dual, "{k},{}", fmt17(x));
        for lam in &lp.dual.lambdas {
            let _ = write!(dual, ",{}", fmt17(lam[k]));
        }
        dual.push('\n');
    }
    let coupling = lp.optimal_coupling.to_csv();
    let exit = if lp.gap_ok() { 0 } else { 2 };
    let mut o = outcome("worst_case", &out, coupling.clone(), format, exit);
    o.files.push(("worst_case_coupling.csv".into(), coupling));
    o.files.push(("dual.csv".into(), dual));
    Ok(o)
}

// ------------------------------------------------------------ guarantee

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuaranteeOutput {
    pub reports: Vec<GuaranteeReport>,
    pub det_reserve: Option<DetReserveGuarantee>,
}

fn lp_report(mech: &Mechanism, run: &Run) -> Result<GuaranteeReport, CliError> {
    let lp = nature_worst_case(mech, &run.marginal, run.n, run.grid).map_err(lp_input)?;
    Ok(GuaranteeReport {
        mechanism_tag: mech.kind_tag().to_string(),
        n_bidders: run.n,
        guarantee_value: lp.primal_value,
        method: Method::LpEstimate,
        validity: Validity::Exact,
        parameter: None,
        crosscheck_residual: None,
    })
}

fn capped_report(f: &Marginal, n: usize, r: f64) -> Result<GuaranteeReport, CliError> {
    let value = beta_r_lower_bound(f, n, r).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(GuaranteeReport {
        mechanism_tag: "spa_capped_beta".into(),
        n_bidders: n,
        guarantee_value: value,
        method: Method::DualBound,
        validity: Validity::LowerBound,
        parameter: Some(r),
        crosscheck_residual: None,
    })
}

pub fn guarantee(run: &Run, format: Format) -> Result<Outcome, CliError> {
    let mech = run.require_mechanism()?;
    let spec = run.mechanism_spec.as_ref().expect("spec present with mechanism");
    let f = &run.marginal;
    let n = run.n;
    let input = |e: maxmin_core::guar::GuarError| CliError::Input(e.to_string());
    let reserve = match spec {
        MechanismSpec::SpaRandomReserve { reserve, .. } => Some(*reserve),
        MechanismSpec::SpaUniformReserve { .. } => Some(ReserveSpec::Uniform),
        MechanismSpec::SpaBetaReserve { .. } => Some(ReserveSpec::Beta),
        MechanismSpec::SpaCappedBeta { r, .. } => Some(ReserveSpec::Capped { r: *r }),
        MechanismSpec::SpaPlain { .. } => Some(ReserveSpec::None),
        MechanismSpec::SpaDeterministicReserve { r, .. } => Some(ReserveSpec::Degenerate { r: *r }),
        _ => None,
    };
    let within_caps = grid_cap(n).is_some_and(|cap| run.grid <= cap);
    let mut det_reserve = None;
    let mut reports = Vec::new();
    match (spec, reserve) {
        (_, Some(ReserveSpec::Uniform)) if n == 2 => reports.push(guarantee_full_insurance(f)),
        (_, Some(ReserveSpec::Beta)) => reports.push(guarantee_beta(f, n).map_err(input)?),
        (_, Some(ReserveSpec::Capped { r })) => reports.push(capped_report(f, n, r)?),
        (_, Some(ReserveSpec::None)) => reports.push(guarantee_spa_plain(f, n).map_err(input)?),
        (_, Some(ReserveSpec::Degenerate { .. })) => {
            if within_caps {
                reports.push(lp_report(mech, run)?);
            }
            det_reserve = Some(guarantee_spa_det_reserve(f, n).map_err(input)?);
        }
        (MechanismSpec::PostedPrice { p, .. }, _) => {
            reports.push(GuaranteeReport {
                mechanism_tag: "posted_price".into(),
                n_bidders: n,
                guarantee_value: p * (1.0 - f.cdf_left(*p)),
                method: Method::ClosedForm,
                validity: Validity::Exact,
                parameter: Some(*p),
                crosscheck_residual: None,
            });
            reports.push(guarantee_posted_price(f));
        }
        _ => {
            if !within_caps {
                return Err(CliError::Input(format!("grid {} exceeds the LP cap for {n} bidders", run.grid)));
            }
            reports.push(lp_report(mech, run)?);
        }
    }
    if within_caps {
        if let Some(first) = reports.first_mut() {
            if first.method != Method::LpEstimate {
                let lp = nature_worst_case(mech, f, n, run.grid).map_err(lp_input)?;
                first.crosscheck(lp.primal_value);
            }
        }
    }
    let csv = reports_to_csv(&reports);
    let out = GuaranteeOutput { reports, det_reserve };
    Ok(outcome("guarantee", &out, csv, format, 0))
}

// -------------------------------------------------------------- compare

pub fn compare(run: &Run, format: Format) -> Result<Outcome, CliError> {
    let f = &run.marginal;
    let report: DominanceReport = dominance_report(f, run.n).map_err(|e| CliError::Input(e.to_string()))?;
    let table = report.to_csv();
    let mut curve = String::from("x,capped_beta_bound,posted_price_revenue\n");
    for k in 1..=200 {
        let x = k as f64 / 200.0;
        let bound = beta_r_lower_bound(f, run.n, x).expect("cap in range");
        let _ = writeln!(curve, "{},{},{}", fmt17(x), fmt17(bound), fmt17(x * (1.0 - f.cdf_left(x))));
    }
    let exit = if report.all_hold() { 0 } else { 2 };
    let mut o = outcome("compare", &report, table.clone(), format, exit);
    o.files.push(("compare.csv".into(), table));
    o.files.push(("r_curve.csv".into(), curve));
    Ok(o)
}

// --------------------------------------------------------------- saddle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleCheck {
    pub name: String,
    pub holds: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaddleOutput {
    pub n_bidders: usize,
    pub grid_size: usize,
    pub mechanism: String,
    pub closed_form: f64,
    pub validity: Validity,
    /// Worst case on the grid with values rounded down; never above the continuum worst case.
    pub primal_floor: f64,
    /// Worst case on the grid with values rounded up; never below the continuum worst case.
    pub primal_ceil: f64,
    pub discretization_bound: f64,
    pub gap: f64,
    pub best_response_bound: f64,
    pub adversarial_revenue: f64,
    pub checks: Vec<SaddleCheck>,
    pub verdict: String,
}

pub fn saddle(run: &Run, format: Format) -> Result<Outcome, CliError> {
    let f = &run.marginal;
    let n = run.n;
    let mech = if n == 2 { Mechanism::spa_uniform_reserve(2) } else { Mechanism::spa_beta_reserve(n) }
        .map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(given) = &run.mechanism {
        if given != &mech {
            return Err(CliError::Input(format!(
                "saddle verifies the {} mechanism; remove the \"mechanism\" entry or set it to that kind",
                if n == 2 { "spa_uniform_reserve" } else { "spa_beta_reserve" }
            )));
        }
    }
    let adv = match build_structure(f, n, run.grid) {
        Ok(a) => a,
        Err(AdversaryError::Infeasible(fail)) => return Ok(infeasible("saddle", fail, format)),
        Err(e) => return Err(CliError::Input(e.to_string())),
    };
    let closed = guarantee_beta(f, n).map_err(|e| CliError::Input(e.to_string()))?;
    let floor = nature_worst_case(&mech, f, n, run.grid).map_err(lp_input)?;
    let ceil_pmf = f.discretize_with(run.grid, Binning::Ceil).map_err(|e| CliError::Input(e.to_string()))?;
    let ceil = nature_worst_case_pmf(&mech, &ceil_pmf, n).map_err(lp_input)?;
    let bound = (ceil.primal_value - floor.primal_value).max(0.0);
    let gap_tol = run.tolerances.gap.max(GAP_TOLERANCE) * (1.0 + floor.primal_value.abs());
    let brb = best_response_bound(&adv.joint);
    let revenue = expected_payment(&mech, &adv.joint);

    let checks = vec![
        SaddleCheck {
            name: "closed_form_within_discretization_bound".into(),
            holds: (floor.primal_value - closed.guarantee_value).abs() <= bound + gap_tol,
            value: (floor.primal_value - closed.guarantee_value).abs(),
            tolerance: bound + gap_tol,
        },
        SaddleCheck {
            name: "duality_gap".into(),
            holds: floor.gap_ok() && ceil.gap_ok(),
            value: floor.gap.abs().max(ceil.gap.abs()),
            tolerance: gap_tol,
        },
        SaddleCheck {
            name: "best_response_matches_revenue".into(),
            holds: (brb - revenue).abs() <= bound + gap_tol,
            value: (brb - revenue).abs(),
            tolerance: bound + gap_tol,
        },
    ];
    let pass = checks.iter().all(|c| c.holds);
    let out = SaddleOutput {
        n_bidders: n,
        grid_size: run.grid,
        mechanism: mech.kind_tag().to_string(),
        closed_form: closed.guarantee_value,
        validity: closed.validity,
        primal_floor: floor.primal_value,
        primal_ceil: ceil.primal_value,
        discretization_bound: bound,
        gap: floor.gap,
        best_response_bound: brb,
        adversarial_revenue: revenue,
        checks,
        verdict: if pass { "PASS" } else { "FAIL" }.into(),
    };
    let mut csv = String::from("check,holds,value,tolerance\n");
    for c in &out.checks {
        let _ = writeln!(csv, "{},{},{},{}", c.name, c.holds, fmt17(c.value), fmt17(c.tolerance));
    }
    Ok(outcome("saddle", &out, csv, format, if pass { 0 } else { 2 }))
}
