use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maxmin_cli::commands::{AdversaryOutput, CheckOutput, GuaranteeOutput, InfeasibleOutput, SaddleOutput, WorstCaseOutput};
use maxmin_core::guar::DominanceReport;
use tempfile::TempDir;

fn maxmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxmin")).args(args).output().expect("binary runs")
}

fn config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    maxmin(&args)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const ER: &str = r#"{"distribution":{"family":"equal_revenue","alpha":0.5}}"#;
const UNIFORM: &str = r#"{"distribution":{"family":"uniform"}}"#;

#[test]
fn check_exit_status_follows_the_condition() {
    let dir = TempDir::new().unwrap();
    let ok = run("check", &config(&dir, "er.json", ER), &[]);
    assert_eq!(ok.status.code(), Some(0));
    let out: CheckOutput = serde_json::from_str(&stdout(&ok)).unwrap();
    assert!(out.passed);

    let bad = run("check", &config(&dir, "u.json", UNIFORM), &[]);
    assert_eq!(bad.status.code(), Some(2));
    let out: CheckOutput = serde_json::from_str(&stdout(&bad)).unwrap();
    assert!((out.reports[0].mass_slack + 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn malformed_config_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = run("check", &config(&dir, "bad.json", r#"{"distribution":{"family":"equal_revenue"}}"#), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha"));

    let o = run("check", &config(&dir, "typo.json", r#"{"distribution":{"family":"uniform"},"grd":3}"#), &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = run("worst-case", &config(&dir, "nomech.json", UNIFORM), &[]);
    assert_eq!(o.status.code(), Some(1));

    let o = maxmin(&["check"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn saddle_infeasible_exits_three_with_witness() {
    let dir = TempDir::new().unwrap();
    let o = run("saddle", &config(&dir, "u.json", UNIFORM), &[]);
    assert_eq!(o.status.code(), Some(3));
    let out: InfeasibleOutput = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((out.failure.top_atom + 1.0 / 3.0).abs() < 1e-9);
    assert_eq!(out.location, 1.0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("witness"));
}

#[test]
fn saddle_passes_for_equal_revenue() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let o = run("saddle", &config(&dir, "er.json", ER), &["--grid", "60", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out: SaddleOutput = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(out.verdict, "PASS");
    assert!(out.primal_floor <= 0.75 && 0.75 <= out.primal_ceil);
    let saved = std::fs::read_to_string(out_dir.join("saddle.json")).unwrap();
    assert_eq!(saved, stdout(&o));
}

#[test]
fn three_bidder_saddle() {
    let dir = TempDir::new().unwrap();
    let o = run("saddle", &config(&dir, "er.json", ER), &["--n", "3", "--grid", "15"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out: SaddleOutput = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(out.mechanism, "spa_beta_reserve");
    assert!((out.closed_form - 0.792893).abs() < 1e-6);
}

#[test]
fn adversary_writes_coupling_and_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "er.json",
        r#"{"distribution":{"family":"equal_revenue","alpha":0.4},"mechanism":{"kind":"spa_uniform_reserve"},"grid_size":30}"#,
    );
    let out_dir = dir.path().join("adv");
    let o = run("adversary", &cfg, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out: AdversaryOutput = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(out.max_abs_phi_high_off_top <= 1e-5);
    assert!(out.marginal_error <= 1e-10);
    let eval = out.evaluation.unwrap();
    // Grid payments of a continuous mechanism only approximate the discrete
    // virtual surplus; both approach the guarantee 2α − α².
    assert!((eval.expected_payment - 0.64).abs() < 2e-2);
    assert!((eval.expected_virtual_surplus - 0.64).abs() < 2e-2);
    let curves = std::fs::read_to_string(out_dir.join("adversary_curves.csv")).unwrap();
    assert!(curves.starts_with("x,f,recovered_f,c,g\n"));
    assert_eq!(curves.lines().count(), 200);
    assert!(out_dir.join("adversary_coupling.csv").exists());
}

#[test]
fn worst_case_reports_a_tight_dual() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "pp.json",
        r#"{"distribution":{"family":"truncated_pareto","alpha":0.4,"beta":0.8},"mechanism":{"kind":"spa_plain","n":3}}"#,
    );
    let out_dir = dir.path().join("wc");
    let o = run("worst-case", &cfg, &["--grid", "10", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out: WorstCaseOutput = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(out.lp.gap.abs() <= 1e-7 && out.dual_feasible);
    let dual = std::fs::read_to_string(out_dir.join("dual.csv")).unwrap();
    assert!(dual.starts_with("node,value,lambda1,lambda2,lambda3\n"));
    assert_eq!(dual.lines().count(), 11);

    let over = run("worst-case", &cfg, &["--grid", "26"]);
    assert_eq!(over.status.code(), Some(1));
}

#[test]
fn guarantee_json_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "g.json",
        r#"{"distribution":{"family":"equal_revenue","alpha":0.5},"mechanism":{"kind":"spa_uniform_reserve","n":2}}"#,
    );
    let o = run("guarantee", &cfg, &["--grid", "60"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let out: GuaranteeOutput = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&out).unwrap() + "\n", text);
    let r = &out.reports[0];
    assert!((r.guarantee_value - 0.75).abs() < 1e-12);
    assert!(r.crosscheck_residual.unwrap() < 2e-2);
}

#[test]
fn compare_orders_the_uniform_benchmarks() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("cmp");
    let o = run("compare", &config(&dir, "u.json", UNIFORM), &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: DominanceReport = serde_json::from_str(&stdout(&o)).unwrap();
    let value = |tag: &str| report.rows.iter().find(|r| r.mechanism_tag == tag).unwrap().guarantee_value;
    assert!((value("spa_capped_beta") - 0.375).abs() < 1e-6);
    assert!((value("spa_beta_reserve") - 1.0 / 3.0).abs() < 1e-12);
    assert!((value("posted_price") - 0.25).abs() < 1e-6);
    assert!(report.all_hold());
    assert!(out_dir.join("r_curve.csv").exists());
}

#[test]
fn output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        &dir,
        "d.json",
        r#"{"distribution":{"family":"truncated_pareto","alpha":0.4,"beta":0.8},"mechanism":{"kind":"spa_beta_reserve","n":3},"grid_size":12}"#,
    );
    for cmd in ["worst-case", "adversary", "guarantee"] {
        let a = run(cmd, &cfg, &["--format", "csv"]);
        let b = run(cmd, &cfg, &["--format", "csv"]);
        assert_eq!(a.status.code(), Some(0), "{cmd}");
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}
