use std::fs;
use std::path::Path;

use assert_cmd::Command;
use serde_json::Value;
use tempfile::TempDir;

fn lppls() -> Command {
    Command::cargo_bin("lppls").unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    lppls()
        .args(["synth", "--paper-defaults", "--out-dir"])
        .arg(dir)
        .args(extra)
        .assert()
        .success();
}

fn json_of(out: &[u8]) -> Value {
    serde_json::from_slice(out).expect("stdout is JSON")
}

#[test]
fn synth_is_deterministic_under_seed() {
    let run = |seed: &str| {
        let tmp = TempDir::new().unwrap();
        lppls()
            .current_dir(tmp.path())
            .args(["synth", "--paper-defaults", "--out-dir", "out", "--seed", seed])
            .assert()
            .success();
        let read = |f: &str| fs::read(tmp.path().join("out").join(f)).unwrap();
        (read("series.csv"), read("series.meta.json"))
    };
    let a = run("11");
    let b = run("11");
    let c = run("12");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn synth_sidecar_records_reference_values() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    let meta: Value =
        serde_json::from_slice(&fs::read(tmp.path().join("series.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["schema_version"], 1);
    assert_eq!(meta["spec"]["sigma0"], 0.03);
    assert_eq!(meta["spec"]["m0"], 0.8);
    assert_eq!(meta["spec"]["omega0"], 9.0);
    assert_eq!(meta["spec"]["tc0"], "1975-02-09");
    assert_eq!(meta["config"]["generator"], meta["spec"]);
}

#[test]
fn synth_without_parameters_is_a_usage_error() {
    lppls().args(["synth", "--m0", "0.5"]).assert().code(2);
    lppls()
        .args(["synth", "--paper-defaults", "--sigma0", "-1"])
        .assert()
        .code(2);
}

#[test]
fn fit_recovers_noiseless_critical_time() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--sigma0", "0"]);
    let out = lppls()
        .args(["fit", "--t2", "1975-01-01", "--input"])
        .arg(tmp.path().join("series.csv"))
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let report = json_of(&out);
    let est = &report["estimate"];
    assert!((est["tc_offset_days"].as_f64().unwrap() - 39.0).abs() <= 1.0);
    assert_eq!(est["tc_date"], "1975-02-09");
    assert!((est["m"].as_f64().unwrap() - 0.8).abs() < 1e-6);
    assert!((est["omega"].as_f64().unwrap() - 9.0).abs() < 1e-6);
    assert_eq!(report["diagnostics"]["converged"], true);
    assert_eq!(report["config"]["window_days"], 300);
    assert_eq!(report["config"]["tc"]["min_offset"], -50);
    assert!(report["config"]["calibration"]["starts"].as_array().unwrap().len() == 15);
}

#[test]
fn fit_json_round_trips_exactly() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--seed", "4"]);
    let run = || {
        lppls()
            .args(["fit", "--t2", "1975-01-01", "--input"])
            .arg(tmp.path().join("series.csv"))
            .assert()
            .success()
            .get_output()
            .stdout
            .clone()
    };
    let first = run();
    assert_eq!(first, run(), "identical runs must give identical bytes");
    let parsed = json_of(&first);
    let again = serde_json::to_string_pretty(&parsed).unwrap() + "\n";
    assert_eq!(again.as_bytes(), &first[..]);
    let tc = parsed["estimate"]["tc"].as_f64().unwrap();
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains(&format!("\"tc\": {tc:?}")) || text.contains(&format!("\"tc\": {tc}")));
}

#[test]
fn input_errors_map_to_exit_codes() {
    let tmp = TempDir::new().unwrap();
    lppls()
        .args(["fit", "--input"])
        .arg(tmp.path().join("missing.csv"))
        .assert()
        .code(2);

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "date,close\n2020-01-01,10\n2020-01-02,-3\n").unwrap();
    lppls().args(["fit", "--input"]).arg(&bad).assert().code(3);

    let short = tmp.path().join("short.csv");
    fs::write(&short, "date,close\n2020-01-01,10\n2020-01-02,11\n2020-01-03,12\n").unwrap();
    lppls().args(["fit", "--input"]).arg(&short).assert().code(3);

    lppls().args(["fit"]).assert().code(2);
    lppls()
        .args(["--threads", "0", "fit", "--input"])
        .arg(&short)
        .assert()
        .code(2);
    lppls()
        .args(["profile", "--cutoff", "1.5", "--input"])
        .arg(&short)
        .assert()
        .code(2);
}

#[test]
fn profile_writes_one_interval_file_per_curve() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, &["--seed", "5"]);
    lppls()
        .args(["profile", "--t2", "1975-01-01", "--format", "csv", "--input"])
        .arg(data.join("series.csv"))
        .arg("--out-dir")
        .arg(&out)
        .assert()
        .success();
    for f in ["curve_tc.csv", "intervals_lp.csv", "intervals_lm.csv", "nuisance_tc.csv", "run.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let run: Value = serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["cutoffs"], serde_json::json!([0.05]));
    let lm = fs::read_to_string(out.join("intervals_lm.csv")).unwrap();
    assert!(lm.lines().count() >= 2);
    let curve = fs::read_to_string(out.join("curve_tc.csv")).unwrap();
    assert_eq!(curve.lines().count(), 202);
}

#[test]
fn profile_json_has_unit_maximum() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--seed", "6"]);
    let out = lppls()
        .args(["profile", "--t2", "1975-01-01", "--cutoff", "0.05", "--cutoff", "0.5", "--input"])
        .arg(tmp.path().join("series.csv"))
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let report = json_of(&out);
    let curve = report["curve"].as_array().unwrap();
    for key in ["rel_lp", "rel_lm"] {
        let max = curve
            .iter()
            .filter_map(|r| r[key].as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(max, 1.0, "{key}");
    }
    assert_eq!(report["intervals"].as_array().unwrap().len(), 4);
    assert!(!report["maxima"].as_array().unwrap().is_empty());
}

#[test]
fn nuisance_reports_profile_and_approximate_intervals() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--seed", "3"]);
    let out = lppls()
        .args(["nuisance", "--t2", "1975-01-01", "--input"])
        .arg(tmp.path().join("series.csv"))
        .assert()
        .success()
        .get_output()
        .stdout
        .clone();
    let report = json_of(&out);
    assert_eq!(report["likelihood_intervals"].as_array().unwrap().len(), 4);
    let approx = report["approximate_intervals"].as_array().unwrap();
    assert_eq!(approx.len(), 3);
    let names: Vec<&str> = approx.iter().map(|a| a["parameter"].as_str().unwrap()).collect();
    assert_eq!(names, ["m", "omega", "damping"]);
}

#[test]
fn multiscale_masks_are_nested() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, &["--seed", "9"]);
    let run = |filter: &str| {
        let out = lppls()
            .args([
                "multiscale",
                "--t2",
                "1975-01-01",
                "--dt-min",
                "150",
                "--dt-max",
                "390",
                "--dt-step",
                "120",
                "--filter",
                filter,
                "--input",
            ])
            .arg(data.join("series.csv"))
            .assert()
            .success()
            .get_output()
            .stdout
            .clone();
        json_of(&out)
    };
    let strict = run("strict");
    let conf = run("confidence");
    assert_eq!(strict["surface"], conf["surface"]);
    let mask = |v: &Value| -> Vec<bool> {
        v["qualified"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r.as_array().unwrap().iter().map(|b| b.as_bool().unwrap()))
            .collect()
    };
    let (s, c) = (mask(&strict), mask(&conf));
    assert_eq!(s.len(), 3 * 201);
    assert!(s.iter().zip(&c).all(|(s, c)| !*s || *c));
    assert_eq!(strict["summary"]["rows_ok"], 3);
    assert!(run("none")["qualified"].is_null());
}

#[test]
fn multiscale_csv_writes_surface_and_contours() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, &["--seed", "2"]);
    lppls()
        .args([
            "multiscale",
            "--format",
            "csv",
            "--t2",
            "1975-01-01",
            "--dt-min",
            "200",
            "--dt-max",
            "200",
            "--cutoff",
            "0.05",
            "--cutoff",
            "0.5",
            "--input",
        ])
        .arg(data.join("series.csv"))
        .arg("--out-dir")
        .arg(&out)
        .assert()
        .success();
    let surface = fs::read_to_string(out.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().count(), 1 + 201);
    let contour: Value = serde_json::from_slice(&fs::read(out.join("contour.json")).unwrap()).unwrap();
    assert_eq!(contour["cutoffs"], serde_json::json!([0.05, 0.5]));
    assert_eq!(contour["schema_version"], 1);
}

#[test]
fn multiscale_rejects_bad_ranges() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &[]);
    lppls()
        .args(["multiscale", "--dt-min", "500", "--dt-max", "100", "--input"])
        .arg(tmp.path().join("series.csv"))
        .assert()
        .code(2);
    lppls()
        .args(["multiscale", "--tc-step", "0", "--input"])
        .arg(tmp.path().join("series.csv"))
        .assert()
        .code(2);
}
