//! Drives the `extcal` binary end to end.

use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn extcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extcal")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(root: &Path, cameras: usize, extra: &[&str]) {
    let cams = cameras.to_string();
    let mut args = vec!["synth", "--kind", "ring", "--seed", "4", "--out", s(root), "--cameras", &cams, "--points", "250"];
    args.extend_from_slice(extra);
    let out = extcal(&args);
    assert!(out.status.success(), "{}", stderr(&out));
}

fn calibrate(root: &Path, out: &Path) -> Output {
    extcal(&[
        "calibrate",
        "--features",
        s(&root.join("features")),
        "--intrinsics",
        s(&root.join("intrinsics.txt")),
        "--out",
        s(out),
    ])
}

fn csv_rows(path: &Path) -> (f64, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let scale: f64 = lines.next().unwrap().strip_prefix("scale,").unwrap().parse().unwrap();
    assert_eq!(lines.next().unwrap(), "image_id,R_err_deg,T_err_deg,C_err");
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (scale, rows)
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(extcal(&["--help"]).status.code(), Some(0));
    assert_eq!(extcal(&[]).status.code(), Some(2));
    assert_eq!(extcal(&["reconstruct"]).status.code(), Some(2));
    let missing = extcal(&["calibrate", "--features", "x"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("--intrinsics"));
    assert_eq!(extcal(&["synth", "--kind", "cube", "--seed", "1", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn synth_calibrate_evaluate_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 5, &[]);
    let est = tmp.path().join("est");
    let out = calibrate(&data, &est);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("registered 5/5"));
    assert!(fs::read_to_string(est.join("calibrate.log")).unwrap().contains("registered 5"));

    for format in ["middlebury", "strecha"] {
        let csv = tmp.path().join(format!("{format}.csv"));
        let out = extcal(&["evaluate", "--est", s(&est), "--gt", s(&data.join("gt")), "--format", format, "--out", s(&csv)]);
        assert!(out.status.success(), "{}", stderr(&out));
        let (scale, rows) = csv_rows(&csv);
        assert!(scale > 0.0);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0][2], 0.0);
        for row in &rows {
            assert!(row[1] < 1e-5 && row[2] < 1e-5 && row[3] < 1e-8, "{row:?}");
        }
    }
}

#[test]
fn model_ply_lists_points_then_cameras() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 3, &[]);
    let est = tmp.path().join("est");
    assert!(calibrate(&data, &est).status.success());

    let mut file = fs::File::open(est.join("model.ply")).unwrap();
    let ply = Parser::<DefaultElement>::new().read_ply(&mut file).unwrap();
    let vertices = &ply.payload["vertex"];
    let red = |v: &DefaultElement| matches!((&v["red"], &v["green"]), (Property::UChar(255), Property::UChar(0)));
    let cameras: Vec<_> = vertices.iter().filter(|v| red(v)).collect();
    assert_eq!(cameras.len(), 3);
    assert!(vertices.len() > 100);
    // Cameras come last and the gauge camera sits at the origin.
    assert!(vertices[..vertices.len() - 3].iter().all(|v| matches!(v["red"], Property::UChar(160))));
    let first = vertices[vertices.len() - 3].clone();
    for axis in ["x", "y", "z"] {
        assert!(matches!(first[axis], Property::Double(c) if c == 0.0));
    }
}

#[test]
fn missing_ground_truth_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (big, small) = (tmp.path().join("big"), tmp.path().join("small"));
    synth(&big, 4, &[]);
    synth(&small, 2, &[]);
    let est = tmp.path().join("est");
    assert!(calibrate(&big, &est).status.success());
    let out = extcal(&[
        "evaluate",
        "--est",
        s(&est),
        "--gt",
        s(&small.join("gt")),
        "--format",
        "middlebury",
        "--out",
        s(&tmp.path().join("e.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error: MissingGroundTruth"), "{}", stderr(&out));
}

#[test]
fn malformed_inputs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 2, &[]);
    fs::write(data.join("intrinsics.txt"), "700 0 320\n0 700\n0 0 1\n").unwrap();
    let out = calibrate(&data, &tmp.path().join("est"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error: ParseError"), "{}", stderr(&out));

    let nowhere: PathBuf = tmp.path().join("absent");
    let out = extcal(&["evaluate", "--est", s(&nowhere), "--gt", s(&nowhere), "--format", "strecha", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn noisy_dataset_still_registers() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, &["--noise", "0.5", "--outliers", "0.1"]);
    let est = tmp.path().join("est");
    let out = calibrate(&data, &est);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = fs::read_to_string(est.join("manifest.txt")).unwrap();
    assert!(manifest.lines().count() >= 3);
}

#[test]
fn selftest_reports_every_check() {
    let out = extcal(&["selftest"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS ")).count(), 5);
}
