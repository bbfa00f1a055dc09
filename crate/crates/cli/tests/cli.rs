use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qcmd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcmd"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_at_time_zero_reports_initial_expectations() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmd(&["simulate", "--dt", "0.001", "--T", "0", "--out", "sim.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "time,mass,nuclear_y,nuclear_v,position,momentum,gaussian,xgaussian,kinetic");
    let fields: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(fields[0], 0.0);
    assert!((fields[4] + 1.0).abs() < 1e-9);
    assert!((fields[5] - 2.0).abs() < 1e-8);
    assert!(dir.path().join("sim.manifest.json").exists());
}

#[test]
fn sweep_dt_writes_errors_slopes_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmd(
        &[
            "sweep-dt", "--h", "2^-3", "--T", "0.125", "--reference-dt", "2^-12", "--dts", "2^-5,2^-6,2^-7",
            "--observables", "gaussian", "--out", "runs/fig1.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("runs/fig1.csv")).unwrap();
    assert!(csv.starts_with(
        "run_id,h,dt,T,n_points,metric,reference_value,numerical_value,abs_error,wall_time_seconds\n"
    ));
    assert_eq!(csv.lines().count(), 1 + 3 * 4);
    let slopes = fs::read_to_string(dir.path().join("runs/fig1.slopes.csv")).unwrap();
    let wf = slopes.lines().find(|l| l.starts_with("wavefunction_l2,")).unwrap();
    let slope: f64 = wf.split(',').nth(1).unwrap().parse().unwrap();
    assert!((1.8..2.2).contains(&slope), "{wf}");

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("runs/fig1.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep-dt");
    assert_eq!(manifest["config"]["h"], 0.125);
    assert_eq!(manifest["config"]["reference_dt"], 2f64.powi(-12));
    assert_eq!(manifest["parameters"]["dts"][2], 2f64.powi(-7));
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["simulate", "--dt", "0.3"],
        vec!["simulate", "--h", "abc"],
        vec!["simulate", "--potential", "morse"],
        vec!["simulate", "--unknown-flag", "1"],
        vec!["egorov", "--observable", "position"],
    ] {
        let out = qcmd(&args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        let err = stderr(&out);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error[usage]: "), "{err}");
    }
}

#[test]
fn boundary_mass_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmd(&["simulate", "--x0", "3", "--out", "b.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.starts_with("error[runtime]: boundary density"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn egorov_report_carries_a_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmd(
        &[
            "egorov", "--observable", "gaussian", "--path", "husimi", "--hs", "2^-6,2^-7", "--T", "0", "--out",
            "egorov.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("egorov.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "observable,path,h,T,quantum,classical,defect,fitted_slope");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    let slope: f64 = rows[0][7].parse().unwrap();
    assert!(slope.is_finite());
    assert_eq!(rows[0][1], "husimi");
}

#[test]
fn phase_space_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmd(&["phase-space", "--h", "2^-4", "--T", "0", "--kind", "wigner", "--out", "w.txt"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("w.txt")).unwrap();
    let field = qcmd::PhaseSpaceField::read_text(text.as_bytes()).unwrap();
    assert_eq!(field.kind, qcmd::FieldKind::Wigner);
    assert!((field.total() - 1.0).abs() < 1e-8);
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = qcmd(&["sweep-h", "--help"], dir.path());
    assert!(out.status.success());
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--h ", "--dt", "--T ", "--potential", "--alpha", "--x0", "--k0", "--y0", "--v0", "--observables",
        "--reference-dt", "--points-per-h", "--out", "--workers", "--hs", "--mode",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
}
