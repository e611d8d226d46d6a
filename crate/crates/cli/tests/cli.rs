//! End-to-end checks of the command-line tool: table generation,
//! model construction, solving, references, comparison, dispersion
//! curves, exit codes, and manifest emission.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_helm27")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn helm27")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn csv_data_rows(path: &PathBuf) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("inv_g") && !l.trim().is_empty())
        .map(|s| s.to_string())
        .collect()
}

/// Pulls the `err=` value out of `compare` stdout.
fn compare_err(out: &Output) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    text.split_whitespace()
        .find_map(|t| t.strip_prefix("err=").map(|v| v.parse().unwrap()))
        .unwrap_or_else(|| panic!("no err= in compare output: {text}"))
}

#[test]
fn weights_adaptive_emits_default_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["weights", "--mode", "adaptive", "--out", "t.csv"]);
    assert_ok(&out);
    let rows = csv_data_rows(&dir.path().join("t.csv"));
    // default ratio grid: 1/G = 0.001 ..= 0.4 in steps of 0.001
    assert_eq!(rows.len(), 400);
    // manifest written alongside
    assert!(dir.path().join("t.csv.manifest.json").exists());
}

#[test]
fn weights_single_emits_one_row_summing_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["weights", "--mode", "single", "--g", "4", "--out", "g4.csv"]);
    assert_ok(&out);
    let rows = csv_data_rows(&dir.path().join("g4.csv"));
    assert_eq!(rows.len(), 1);
    let fields: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    // layout: inv_g, ws1, ws2, ws3, wm0, wm1, wm2, wm3
    assert_eq!(fields.len(), 8);
    let ws: f64 = fields[1..4].iter().sum();
    let wm: f64 = fields[4..8].iter().sum();
    assert!((ws - 1.0).abs() < 1e-9, "stiffness sum {ws}");
    assert!((wm - 1.0).abs() < 1e-9, "mass sum {wm}");
}

#[test]
fn adaptive_variants_agree_on_homogeneous_media() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run_in(d, &["weights", "--mode", "adaptive", "--out", "t.csv"]));
    assert_ok(&run_in(
        d,
        &["make-model", "--kind", "homogeneous", "--dims", "12,12,12", "--h", "50", "--c", "1500", "--out", "m.bin"],
    ));
    for variant in ["ga", "gam"] {
        assert_ok(&run_in(
            d,
            &[
                "solve", "--model", "m.bin", "--freq", "7.5", "--source", "300,300,300",
                "--variant", variant, "--weights", "t.csv", "--pml", "6", "--tol", "1e-8",
                "--out", &format!("{variant}.field"),
            ],
        ));
    }
    // On a uniform model every node sees the same sampling ratio, so the
    // neighborhood-averaged variant must reproduce the pointwise one up
    // to solver tolerance.
    let out = run_in(d, &["compare", "ga.field", "gam.field", "--source", "300,300,300"]);
    assert_ok(&out);
    let err = compare_err(&out);
    assert!(err <= 1e-6, "ga vs gam err {err}");
}

#[test]
fn invalid_variant_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["solve", "--model", "missing.bin", "--freq", "7.5", "--source", "0,0,0", "--variant", "g9", "--out", "x.field"],
    );
    assert_eq!(out.status.code(), Some(2), "usage errors exit with 2");
}

#[test]
fn missing_model_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["solve", "--model", "missing.bin", "--freq", "7.5", "--source", "0,0,0", "--variant", "g4", "--out", "x.field"],
    );
    assert_eq!(out.status.code(), Some(4), "I/O errors exit with 4");
}

#[test]
fn compare_identical_fields_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run_in(
        d,
        &["make-model", "--kind", "homogeneous", "--dims", "10,10,10", "--h", "50", "--c", "1500", "--out", "m.bin"],
    ));
    assert_ok(&run_in(
        d,
        &["reference", "--kind", "analytic", "--model", "m.bin", "--freq", "7.5", "--source", "250,250,250", "--out", "r.field"],
    ));
    let out = run_in(
        d,
        &["compare", "r.field", "r.field", "--source", "250,250,250", "--report", "rep.json"],
    );
    assert_ok(&out);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("rep.json")).unwrap()).unwrap();
    assert_eq!(rep["err"].as_f64().unwrap(), 0.0);
}

#[test]
fn dispersion_curves_stay_near_unity_for_fitted_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run_in(d, &["weights", "--mode", "single", "--g", "4", "--out", "g4.csv"]));
    assert_ok(&run_in(
        d,
        &[
            "dispersion", "--weights", "g4.csv", "--g", "4",
            "--thetas-deg", "0,15,30,45,60,75,90", "--phis-deg", "0,15,30,45",
            "--out", "c.csv",
        ],
    ));
    let rows = csv_data_rows(&d.join("c.csv"));
    assert_eq!(rows.len(), 7 * 4);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in &rows {
        let v: f64 = r.split(',').last().unwrap().parse().unwrap();
        lo = lo.min(v);
        hi = hi.max(v);
        assert!((v - 1.0).abs() < 0.01, "fitted curve far from unity: {v}");
    }
    assert!(lo < 1.0 && hi > 1.0, "fit residual should straddle unity (lo {lo}, hi {hi})");
}

#[test]
fn direct_and_gmres_agree_on_a_tiny_grid() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run_in(
        d,
        &["make-model", "--kind", "homogeneous", "--dims", "7,7,7", "--h", "50", "--c", "1500", "--out", "m.bin"],
    ));
    for (method, out, tol) in [("direct", "a.field", "1e-9"), ("gmres", "b.field", "1e-10")] {
        assert_ok(&run_in(
            d,
            &[
                "solve", "--model", "m.bin", "--freq", "7.5", "--source", "175,175,175",
                "--variant", "g4", "--pml", "4", "--method", method, "--tol", tol,
                "--out", out,
            ],
        ));
    }
    let out = run_in(d, &["compare", "a.field", "b.field", "--source", "175,175,175"]);
    assert_ok(&out);
    let err = compare_err(&out);
    assert!(err <= 1e-5, "direct vs gmres err {err}");
}

#[test]
fn box_model_carries_body_velocity_and_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_ok(&run_in(
        d,
        &[
            "make-model", "--kind", "box", "--dims", "16,16,16", "--h", "40", "--c", "1500",
            "--c-body", "4482", "--box-lo", "5,5,5", "--box-hi", "10,10,10", "--out", "m.bin",
        ],
    ));
    let model = helm27::model::load_model(&d.join("m.bin")).unwrap();
    assert_eq!(model.c_at(7, 7, 7), 4482.0);
    assert_eq!(model.c_at(1, 1, 1), 1500.0);

    let man: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m.bin.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(man["outputs"][0].as_str().unwrap(), "m.bin");
    let sha = man["config_sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
    assert!(sha.chars().all(|c| c.is_ascii_hexdigit()));
}
