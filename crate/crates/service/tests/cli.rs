use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn arbiter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arbiter"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn reference_scenario_meets_its_expectations() {
    let path = scenarios().join("reference.json");
    let out = arbiter(&["run", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 2);
}

#[test]
fn empty_scenario_gives_empty_report() {
    let path = scenarios().join("empty.json");
    let out = arbiter(&["run", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["outcomes"], serde_json::json!([]));
    assert_eq!(report["vsis"], serde_json::json!({}));
}

#[test]
fn mismatch_exits_nonzero_with_a_diff() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("reference.json"))
        .unwrap()
        .replace("\"2908 packets/s\"", "\"2850 packets/s\"");
    let path = write(dir.path(), "s.json", &text);
    let report = dir.path().join("report.json");
    let out = arbiter(&["run", &path, "--report", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("ica.cpu"), "{err}");
    assert!(err.contains("- expected: within [2835 pkt/s, 2850 pkt/s]"), "{err}");
    assert!(err.contains("+ actual:"), "{err}");
    assert!(report.exists(), "report is still written");
}

#[test]
fn parse_errors_carry_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("reference.json"))
        .unwrap()
        .replace("\"5 s\"", "5");
    let path = write(dir.path(), "s.json", &text);
    for command in ["run", "validate"] {
        let out = arbiter(&[command, &path]);
        assert_eq!(out.status.code(), Some(2));
        let err = stderr(&out);
        assert!(err.contains("line 30, column 30"), "{err}");
        assert_eq!(err.matches("line 30").count(), 1, "{err}");
        assert!(err.contains("requests[1].slo.max_latency"), "{err}");
    }
}

#[test]
fn mixed_units_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("reference.json"))
        .unwrap()
        .replace("\"10 Gbit/s\"", "\"10 GB\"");
    let path = write(dir.path(), "s.json", &text);
    let out = arbiter(&["validate", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("verticals[0].budget.bandwidth"), "{err}");
    assert!(err.contains("expected bandwidth"), "{err}");
}

#[test]
fn validate_summarises() {
    let path = scenarios().join("reference.json");
    let out = arbiter(&["validate", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 vertical(s), 2 request(s), 2 expectation(s)"));
}

#[test]
fn seed_flag_overrides_and_report_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenarios().join("reference.json");
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for target in [&a, &b] {
        let out = arbiter(&["run", path.to_str().unwrap(), "--seed", "77", "--report", target.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(out.stdout.is_empty());
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["seed"], 77);
    assert!(report.get("timing").is_none());

    let out = arbiter(&["run", path.to_str().unwrap(), "--timings"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["timing"]["arbitration"].as_str().unwrap().ends_with(" s"));
}
