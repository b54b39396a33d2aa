use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acdesign"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("json output")
}

/// Copy of a bundled scenario without its output section, so runs do not
/// write next to the originals.
fn scratch_scenario(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let text = std::fs::read_to_string(scenario(name)).unwrap();
    let body = text.split("[output]").next().unwrap();
    let path = dir.join(name);
    std::fs::write(&path, format!("{extra}{body}")).unwrap();
    path
}

#[test]
fn solve_gouty_negative_binomial_uses_the_closed_form() {
    let o = run(&["solve", "--json", scenario("gouty-negbin-d.scenario").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&o);
    assert_eq!(doc["method"], "closed-form/emax-negative-binomial");
    assert_eq!(doc["verification"]["verdict"], "optimal");
    let design = doc["design"].as_array().unwrap();
    assert_eq!(design.len(), 4);
    for p in design {
        assert_eq!(p["weight"].as_f64().unwrap(), 0.25);
    }
    let interior = design[1]["dose"].as_f64().unwrap();
    assert!((interior - 8.1783).abs() < 1e-3, "{interior}");
}

#[test]
fn binomial_mean_above_one_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("gouty-negbin-d.scenario"))
        .unwrap()
        .replace("family = negative-binomial", "family = binomial")
        .replace("e0 = 0.26", "e0 = 0.5");
    let path = dir.path().join("bad.scenario");
    std::fs::write(&path, text).unwrap();
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("key `drug`"));
}

#[test]
fn unknown_key_exits_with_validation_status() {
    let dir = tempfile::tempdir().unwrap();
    let path = scratch_scenario(dir.path(), "gouty-negbin-d.scenario", "colour = red\n");
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1, key `colour`"));
}

#[test]
fn solved_design_verifies_after_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "block-difference.scenario",
        "gouty-negbin-d.scenario",
        "migraine-binomial-ac.scenario",
    ] {
        let path = scratch_scenario(dir.path(), name, "");
        let csv = dir.path().join(format!("{name}.csv"));
        let o = run(&["solve", path.to_str().unwrap()]);
        assert!(o.status.success(), "{name}");
        // the design table follows the summary lines
        let text = stdout(&o);
        let table = &text[text.find("dose,arm,weight").unwrap()..];
        std::fs::write(&csv, table).unwrap();
        let o = run(&["verify", "--json", path.to_str().unwrap(), csv.to_str().unwrap()]);
        assert!(o.status.success(), "{name}");
        assert_eq!(json(&o)["verification"]["verdict"], "optimal", "{name}");
    }
}

#[test]
fn block_difference_design_has_non_positive_sensitivity() {
    let dir = tempfile::tempdir().unwrap();
    let path = scratch_scenario(dir.path(), "block-difference.scenario", "");
    let o = run(&["solve", path.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(text.contains("\n0.92632"), "{text}");
    let csv = dir.path().join("design.csv");
    std::fs::write(&csv, &text[text.find("dose,arm,weight").unwrap()..]).unwrap();

    let o = run(&["verify", path.to_str().unwrap(), csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("verdict: optimal"));
    let curve = stdout(&o);
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("dose,value"));
    let mut count = 0;
    for line in lines {
        let (dose, value) = line.split_once(',').unwrap();
        let value: f64 = value.parse().unwrap();
        assert!(value <= 1e-5, "sensitivity {value} at {dose}");
        count += 1;
    }
    assert!(count >= 512);
}

#[test]
fn trial_design_is_not_optimal() {
    let o = run(&["verify", scenario("gouty-normal-standard.scenario").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("verdict: not-optimal"));
}

#[test]
fn empty_design_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "dose,arm,weight\n").unwrap();
    let o = run(&[
        "verify",
        scenario("gouty-negbin-d.scenario").to_str().unwrap(),
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no points"));
}

#[test]
fn efficiencies_of_the_trial_design() {
    let o = run(&["efficiency", "--json", scenario("gouty-normal-standard.scenario").to_str().unwrap()]);
    assert!(o.status.success());
    let doc = json(&o);
    assert!((doc["d_efficiency"].as_f64().unwrap() - 0.25).abs() <= 0.01);
    assert!((doc["ac_efficiency"].as_f64().unwrap() - 0.66).abs() <= 0.01);
    assert!(doc["criterion_efficiency"].is_null());
}

#[test]
fn scenario_outputs_are_written_next_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("migraine-binomial-ac.scenario")).unwrap();
    let path = dir.path().join("ac.scenario");
    std::fs::write(&path, text).unwrap();
    let o = run(&["solve", path.to_str().unwrap()]);
    assert!(o.status.success());
    let design = std::fs::read_to_string(dir.path().join("migraine-binomial-ac.design.csv")).unwrap();
    assert!(design.starts_with("dose,arm,weight\n"));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("migraine-binomial-ac.report.json")).unwrap())
            .unwrap();
    assert_eq!(report["orientation"], "minimise");
    let curve = std::fs::read_to_string(dir.path().join("migraine-binomial-ac.sensitivity.csv")).unwrap();
    assert!(curve.starts_with("dose,value\n"));
}

#[test]
fn reproduce_is_byte_stable_and_lists_failing_cells() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run(&["reproduce", "--out", a.path().to_str().unwrap()]);
    let second = run(&["reproduce", "--out", b.path().to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
    for table in ["d-optimal.csv", "target-dose.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(table)).unwrap(),
            std::fs::read(b.path().join(table)).unwrap()
        );
    }
    // the cells recorded as unreproducible make the run fail
    assert_eq!(first.status.code(), Some(1));
    let text = stdout(&first);
    assert!(text.contains("[FAIL] d-optimal gouty negative-binomial dose 8.23: expected 8.23, got 8.17831"));
    assert!(text.contains("[PASS] d-optimal migraine binomial dose 9.05"));
}
