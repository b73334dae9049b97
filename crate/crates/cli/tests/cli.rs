use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn coxhaz(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coxhaz"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = coxhaz(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str::<Value>(line).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
        ["error"]
        .clone()
}

fn manifest(dir: &Path, out: &str) -> Value {
    let text = fs::read_to_string(dir.join(format!("{out}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn simulate(dir: &Path, out: &str) {
    ok(
        dir,
        &[
            "simulate",
            "--n",
            "120",
            "--p",
            "6",
            "--weibull",
            "1.5",
            "1",
            "--seed",
            "11",
            "--out",
            out,
        ],
    );
}

const CONFIG: &str = "[defaults]\nreplications = 4\nseed = 3\n\n\
    [[scenario]]\nn = 100\np = 5\nweibull_a = 3.0\nweibull_b = 4.0\n\n\
    [[scenario]]\nid = \"cv\"\nn = 100\np = 5\nweibull_a = 0.5\nweibull_b = 2.0\ngamma_rule = \"cv\"\n";

#[test]
fn pipeline_writes_outputs_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "cohort.csv");
    ok(
        d,
        &["fit-cox", "--input", "cohort.csv", "--out", "beta.csv"],
    );
    ok(
        d,
        &[
            "fit-baseline",
            "--input",
            "cohort.csv",
            "--beta",
            "beta.csv",
            "--out",
            "hist.csv",
        ],
    );
    ok(
        d,
        &[
            "fit-kernel",
            "--input",
            "cohort.csv",
            "--beta",
            "beta.csv",
            "--out",
            "kernel.csv",
        ],
    );

    let beta = fs::read_to_string(d.join("beta.csv")).unwrap();
    assert!(beta.starts_with("j,beta_hat_j\n"));
    assert_eq!(beta.lines().count(), 7);
    let hist = fs::read_to_string(d.join("hist.csv")).unwrap();
    assert!(hist.contains("m_hat="));
    let kernel = fs::read_to_string(d.join("kernel.csv")).unwrap();
    assert!(kernel.contains("cv_first_term=plug-in-integral"));

    let m = manifest(d, "hist.csv");
    assert_eq!(m["command"], "fit-baseline");
    assert_eq!(m["job"]["command"], "fit-baseline");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert!(m["diagnostics"]["chosen_level"].is_u64());
    let sim = manifest(d, "cohort.csv");
    assert_eq!(sim["seed"], 11);

    fs::write(d.join("bench.toml"), CONFIG).unwrap();
    ok(
        d,
        &["benchmark", "--config", "bench.toml", "--out", "report.csv"],
    );
    let report = fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5, "{report}");
    let log = fs::read_to_string(d.join("report.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 8);
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["seed"][0], 3);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "a.csv");
    simulate(d, "b.csv");
    ok(
        d,
        &[
            "replay",
            "--manifest",
            "a.csv.manifest.json",
            "--out",
            "c.csv",
        ],
    );
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    assert_eq!(a, fs::read(d.join("c.csv")).unwrap());

    fs::write(d.join("bench.toml"), CONFIG).unwrap();
    ok(
        d,
        &[
            "--threads",
            "1",
            "benchmark",
            "--config",
            "bench.toml",
            "--out",
            "one.csv",
            "--emit-curves",
        ],
    );
    ok(
        d,
        &[
            "--threads",
            "4",
            "benchmark",
            "--config",
            "bench.toml",
            "--out",
            "four.csv",
            "--emit-curves",
        ],
    );
    ok(
        d,
        &[
            "--threads",
            "2",
            "replay",
            "--manifest",
            "one.csv.manifest.json",
            "--out",
            "again.csv",
        ],
    );
    for ext in ["csv", "log.jsonl", "curves.csv"] {
        let base = fs::read(d.join(format!("one.{ext}"))).unwrap();
        assert!(!base.is_empty());
        assert_eq!(
            base,
            fs::read(d.join(format!("four.{ext}"))).unwrap(),
            "{ext}"
        );
        assert_eq!(
            base,
            fs::read(d.join(format!("again.{ext}"))).unwrap(),
            "{ext}"
        );
    }
}

#[test]
fn malformed_input_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("bad.csv"),
        "# tau=1\ntime,status,z1\n0.5,1,0.1\n0.7,1,oops\n",
    )
    .unwrap();
    let out = coxhaz(d, &["fit-cox", "--input", "bad.csv", "--out", "beta.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_of(&out);
    assert_eq!(e["kind"], "parse");
    assert_eq!(e["line"], 4);
    assert_eq!(e["column"], 3);
    assert!(!d.join("beta.csv").exists());
}

#[test]
fn dimension_mismatch_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "cohort.csv");
    fs::write(d.join("beta.csv"), "j,beta_hat_j\n1,0.1\n2,0.2\n").unwrap();
    let out = coxhaz(
        d,
        &[
            "fit-baseline",
            "--input",
            "cohort.csv",
            "--beta",
            "beta.csv",
            "--out",
            "hist.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["kind"], "dimension");
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = coxhaz(
        d,
        &[
            "simulate",
            "--n",
            "10",
            "--p",
            "3",
            "--weibull",
            "1",
            "1",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "usage");
    assert_eq!(coxhaz(d, &["explode"]).status.code(), Some(2));

    simulate(d, "cohort.csv");
    let out = coxhaz(
        d,
        &[
            "fit-cox",
            "--input",
            "cohort.csv",
            "--gamma-rule",
            "cv",
            "--out",
            "b.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(3));

    fs::write(
        d.join("noseed.toml"),
        "[[scenario]]\nn = 50\np = 3\nweibull_a = 1\nweibull_b = 1\n",
    )
    .unwrap();
    let out = coxhaz(
        d,
        &["benchmark", "--config", "noseed.toml", "--out", "r.csv"],
    );
    assert_eq!(out.status.code(), Some(3));

    let out = coxhaz(d, &["fit-cox", "--input", "missing.csv", "--out", "b.csv"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(error_of(&out)["kind"], "io");

    let help = coxhaz(d, &["--help"]);
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("benchmark"));
}
