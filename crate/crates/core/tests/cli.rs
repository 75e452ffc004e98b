//! End-to-end runs of the binary: exit codes, report contents, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use strobo::cli::{RunConfig, TableResult, VerifyResult};
use strobo::report::{read_report, to_json_string, Report};

fn system(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../systems").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strobo")).args(args).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn without_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn verify_cosine_system_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    let sys = system("cosine_ell2.toml");
    let o = run(&["verify", sys.to_str().unwrap(), "--ell", "2", "--point", "0.5", "--point", "-1.3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["toolkit_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["config"]["ell"], 2);
    let v = &report["result"]["verification"];
    assert_eq!(v["verdict"], "pass");
    for r in v["identity_residuals"].as_array().unwrap() {
        assert!(r["relative"].as_f64().unwrap() <= 1e-7);
    }
    assert_eq!(v["closure"]["status"], "checked");
    assert_eq!(v["samples"].as_array().unwrap().len(), 2);
}

#[test]
fn closure_beyond_order_is_reported_not_computable() {
    let sys = system("cosine_ell2.toml");
    let o = run(&["verify", sys.to_str().unwrap(), "--ell", "2", "--order", "3", "--samples", "1", "--steps", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let closure = &report["result"]["verification"]["closure"];
    assert_eq!(closure["status"], "not-computable");
    assert_eq!(closure["needed_order"], 4);
}

#[test]
fn ell_above_order_is_usage_error() {
    let sys = system("cosine_ell2.toml");
    let o = run(&["verify", sys.to_str().unwrap(), "--ell", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ℓ"));
    assert!(o.stdout.is_empty());
}

#[test]
fn hypothesis_failure_exits_one() {
    let sys = system("nonvanishing_first.toml");
    let o = run(&["verify", sys.to_str().unwrap(), "--ell", "2", "--samples", "2", "--steps", "400"]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["result"]["verification"]["verdict"], "hypothesis-failed");
}

#[test]
fn bell_debug_prints_terms() {
    let o = run(&["bell-debug", "4", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, vec!["3·y2^2", "4·y1·y3"]);
    assert_eq!(run(&["bell-debug", "2", "3"]).status.code(), Some(2));
}

#[test]
fn find_orbit_on_van_der_pol() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("orbit.json");
    let sys = system("vanderpol_radial.toml");
    let o = run(&["find-orbit", sys.to_str().unwrap(), "--guess", "1.5", "--validate-eps", "0.01", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = &json(&out)["result"];
    assert_eq!(r["status"], "found");
    assert!((r["zero"][0].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(r["validation"]["periodicity_residual"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn find_orbit_on_zero_field_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("zero.toml");
    std::fs::write(&file, "name = \"zero\"\ndim = 2\nperiod = \"1\"\norder = 1\n[fields]\n").unwrap();
    let o = run(&["find-orbit", file.to_str().unwrap(), "--guess", "0.1,-0.2", "--steps", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["result"]["status"], "degenerate-zero");
}

#[test]
fn empty_sample_list_gives_valid_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.json");
    let sys = system("decoupled_ell3.toml");
    let o = run(&["table", sys.to_str().unwrap(), "--samples", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: Report<RunConfig, TableResult> = read_report(&out).unwrap();
    assert!(report.result.samples.is_empty());
    assert_eq!(report.result.order, 6);
}

#[test]
fn report_round_trips_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify.json");
    let sys = system("decoupled_ell3.toml");
    let o = run(&["verify", sys.to_str().unwrap(), "--ell", "3", "--samples", "2", "--steps", "300", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let report: Report<RunConfig, VerifyResult> = read_report(&out).unwrap();
    assert_eq!(to_json_string(&report).unwrap(), text);
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sys = system("decoupled_ell3.toml");
    let mut docs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = run(&[
            "table",
            sys.to_str().unwrap(),
            "--samples",
            "3",
            "--seed",
            "17",
            "--box",
            "0:0.5,-1:-0.5",
            "--steps",
            "300",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        docs.push(json(&out));
    }
    let points: Vec<Vec<f64>> = docs[0]["result"]["samples"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["point"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect();
    assert_eq!(points.len(), 3);
    assert!(points.iter().all(|p| (0.0..0.5).contains(&p[0]) && (-1.0..-0.5).contains(&p[1])));
    let b = without_timestamp(docs.pop().unwrap());
    let a = without_timestamp(docs.pop().unwrap());
    // the config echo names the output file, which differs by construction
    let strip = |mut v: Value| {
        v["config"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(strip(a), strip(b));
}

#[test]
fn input_and_output_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["table", missing.to_str().unwrap()]).status.code(), Some(2));

    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "name = \"b\"\ndim = 1\nperiod = \"1\"\norder = 1\n[fields]\n1 = [\"x1 +\"]\n").unwrap();
    let o = run(&["table", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 6"), "{}", String::from_utf8_lossy(&o.stderr));

    let sys = system("cosine_ell2.toml");
    let unwritable = dir.path().join("no-such-dir").join("r.json");
    let o = run(&["table", sys.to_str().unwrap(), "--samples", "1", "--steps", "10", "--out", unwritable.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(run(&["table", sys.to_str().unwrap(), "--box", "1:0"]).status.code(), Some(2));
    assert_eq!(run(&["table", sys.to_str().unwrap(), "--point", "1,2"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn non_periodic_field_is_rejected_by_verify() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("drift.toml");
    std::fs::write(&file, "name = \"drift\"\ndim = 1\nperiod = \"2*pi\"\norder = 2\n[fields]\n1 = [\"t*x1\"]\n").unwrap();
    let o = run(&["verify", file.to_str().unwrap(), "--ell", "2", "--samples", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("periodic"));
    // table only warns
    let o = run(&["table", file.to_str().unwrap(), "--samples", "1", "--steps", "10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}
