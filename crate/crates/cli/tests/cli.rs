use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ncsir(args: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ncsir"));
    cmd.args(args);
    if !args.contains(&"--out") {
        cmd.arg("--out").arg(out);
    }
    cmd.output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_fig1_reports_mean_square_stability() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(&["analyze", "--preset", "fig1"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = read_json(&dir.path().join("fig1/analyze/analysis.json"));
    let x1 = &report["stability"][0];
    assert_eq!(x1["dfe"]["kind"], "FullyCompliant");
    assert_eq!(x1["stochastic_verdict"], "ExpMeanSquareStable");
    assert_eq!(report["certificate"]["status"], "not_applicable");
    assert!(report["notes"].as_str().unwrap().contains("gamma"));

    let manifest = read_json(&dir.path().join("fig1/analyze/manifest.json"));
    assert_eq!(manifest["scenario"]["params"]["gamma"], 0.5);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn analyze_fig5_has_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(&["analyze", "--preset", "fig5"], dir.path());
    assert!(out.status.success());
    let report = read_json(&dir.path().join("fig5/analyze/analysis.json"));
    let mixed = report["stability"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["dfe"]["kind"] == "Mixed")
        .unwrap();
    assert!((mixed["r0"].as_f64().unwrap() - 0.0772).abs() < 5e-4);
    let cert = &report["certificate"];
    assert_eq!(cert["status"], "ok");
    assert!(cert["certificate"]["bound"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("fig5/analyze/certificate.json").exists());
}

#[test]
fn noiseless_verdicts_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("quiet.json");
    std::fs::write(
        &config,
        r#"{"b":0.2,"delta":0.2,"beta":1.0,"gamma":0.5,"alpha":0.25,"mu":0.2,"nu":0.2,
            "xi":0.0,"sigma_beta":0.0,"sigma_mu":0.0}"#,
    )
    .unwrap();
    let out = ncsir(
        &["analyze", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = read_json(&dir.path().join("quiet/analyze/analysis.json"));
    let x1 = &report["stability"][0];
    assert_eq!(x1["deterministic_verdict"], "LocallyAsymptoticallyStable");
    assert_eq!(x1["stochastic_verdict"], "ExpMeanSquareStable");
}

#[test]
fn certificate_refusal_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("hot.json");
    std::fs::write(
        &config,
        r#"{"b":0.3,"delta":1.0,"beta":20.0,"gamma":0.25,"alpha":0.25,"mu":8.0,"nu":1.0,
            "xi":0.0,"sigma_beta":0.125,"sigma_mu":0.125}"#,
    )
    .unwrap();
    let out = ncsir(
        &["analyze", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let report = read_json(&dir.path().join("hot/analyze/analysis.json"));
    assert_eq!(report["certificate"]["status"], "refused");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        r#"{"b":-1,"delta":0.2,"beta":1.0,"gamma":0.5,"alpha":0.25,"mu":0.2,"nu":0.2,
            "xi":0.0,"sigma_beta":0.5,"sigma_mu":0.5}"#,
    )
    .unwrap();
    let out = ncsir(
        &["analyze", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = ncsir(&["simulate", "--preset", "fig1", "--dt", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_det_settles_on_compliant_equilibrium() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(
        &["simulate", "--preset", "fig1", "--mode", "det"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("fig1/simulate/trajectory_det.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,S,I,R,S_star,I_star,R_star"));
    let last: Vec<f64> = csv
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert!((last[0] - 50.0).abs() < 1e-9);
    assert!((last[1] - 1.0).abs() < 1e-2);
    assert!(!dir.path().join("fig1/simulate/trajectory_sde.csv").exists());
}

#[test]
fn simulate_sde_is_reproducible_and_writes_overlay() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = ncsir(
            &[
                "simulate", "--preset", "fig3", "--mode", "sde", "--seed", "7",
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let read = |d: &tempfile::TempDir, f: &str| {
        std::fs::read(d.path().join("fig3/simulate").join(f)).unwrap()
    };
    assert_eq!(
        read(&a, "trajectory_sde.csv"),
        read(&b, "trajectory_sde.csv")
    );
    assert_eq!(
        read(&a, "trajectory_det.csv"),
        read(&b, "trajectory_det.csv")
    );
    assert_ne!(
        read(&a, "trajectory_sde.csv"),
        read(&a, "trajectory_det.csv")
    );
}

#[test]
fn simulate_fig5_time_average_within_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(
        &["simulate", "--preset", "fig5", "--mode", "sde"],
        dir.path(),
    );
    assert!(out.status.success());
    let manifest = read_json(&dir.path().join("fig5/simulate/manifest.json"));
    assert_eq!(
        manifest["run"]["time_average_distance"]["within_bound"],
        true
    );
}

#[test]
fn ensemble_fig1_decays() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(&["ensemble", "--preset", "fig1", "-n", "500"], dir.path());
    assert!(out.status.success());
    let base = dir.path().join("fig1/ensemble");
    let csv = std::fs::read_to_string(base.join("ensemble.csv")).unwrap();
    assert!(csv.starts_with("t,ms_distance,ms_I,ms_Istar,std_error\n"));
    let summary = read_json(&base.join("summary.json"));
    assert!(
        summary["checks"]["ms_ratio_final_over_initial"]
            .as_f64()
            .unwrap()
            < 1e-3
    );
    assert!(summary["fit"]["rate"].as_f64().unwrap() < 0.0);
    assert_eq!(read_json(&base.join("manifest.json"))["run"]["paths"], 500);
}

#[test]
fn ensemble_fig3_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(&["ensemble", "--preset", "fig3", "-n", "500"], dir.path());
    assert!(out.status.success());
    let summary = read_json(&dir.path().join("fig3/ensemble/summary.json"));
    assert_eq!(summary["checks"]["infection_envelope"]["passed"], true);
}

#[test]
fn ensemble_needs_two_paths() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(&["ensemble", "--preset", "fig1", "-n", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_quick_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(&["verify", "--quick"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn verify_catches_missing_milstein_correction() {
    let dir = tempfile::tempdir().unwrap();
    let out = ncsir(
        &["verify", "--quick", "--disable-milstein-correction"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout
        .lines()
        .any(|l| l.starts_with("FAIL") && l.contains("Milstein strong order")));
}
