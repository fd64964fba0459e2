//! End-to-end runs of the `jumplq` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jumplq"))
}

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn smoke_text() -> String {
    std::fs::read_to_string(shipped("smoke.cfg")).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn smoke_config_passes_with_ratio_in_band() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&shipped("smoke.cfg"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("ratios.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        ["p", "q", "regime_case", "family", "lhs", "lhs_se", "rhs", "ratio", "replicas", "seed"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let ratio: f64 = rows[0][7].parse().unwrap();
    assert!((0.5..=4.0).contains(&ratio), "{ratio}");
    assert_eq!(&rows[0][8], "1000");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "jumplq");
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["config"]["mc"]["replicas"], 1000);
}

#[test]
fn empty_pq_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = smoke_text().replace("pq_list = [[2.0, 2.0]]", "pq_list = []");
    let o = run(&write(dir.path(), "c.cfg", &text), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pq_list"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn exponent_one_is_rejected_before_any_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let text = smoke_text().replace("pq_list = [[2.0, 2.0]]", "pq_list = [[1.0, 2.0]]");
    let o = run(&write(dir.path(), "c.cfg", &text), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("pq_list[0].p") && e.contains("exponent must lie in (1, ∞)"), "{e}");
}

#[test]
fn unknown_family_lists_the_known_ones() {
    let dir = tempfile::tempdir().unwrap();
    let text = smoke_text().replace("kind = \"constant\"", "kind = \"gaussian\"");
    let o = run(&write(dir.path(), "c.cfg", &text), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for known in ["constant", "separable", "single_cell_spike", "heavy_tail"] {
        assert!(e.contains(known), "{e}");
    }
}

#[test]
fn malformed_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = smoke_text().replace("replicas = 1000", "replicas = \"many\"");
    let o = run(&write(dir.path(), "c.cfg", &text), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mc.replicas"), "{}", stderr(&o));
}

#[test]
fn failed_assertions_exit_one_and_list_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = smoke_text().replace("ratio = [0.5, 4.0]", "ratio = [10.0, 20.0]");
    let o = run(&write(dir.path(), "c.cfg", &text), &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAIL ratio p=2;q=2;family=flat"), "{}", stderr(&o));
    let checks = std::fs::read_to_string(dir.path().join("out/checks.csv")).unwrap();
    assert!(checks.contains(",false"));
}

#[test]
fn validate_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let text = smoke_text()
        .replace("pq_list = [[2.0, 2.0]]", "pq_list = [[1.0, 0.5]]")
        .replace("kind = \"constant\"", "kind = \"gaussian\"");
    let o = bin().args(["validate", "--config"]).arg(write(dir.path(), "c.cfg", &text)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 3, "{}", stderr(&o));
    let ok = bin().args(["validate", "--config"]).arg(shipped("full.cfg")).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--suite", "ratios", "bdg", "davis", "lemma", "hilbert"];
    let mut outs = Vec::new();
    for (i, w) in ["1", "8", "8"].iter().enumerate() {
        let out = dir.path().join(format!("r{i}"));
        let mut a = vec!["--workers", w];
        a.extend(args);
        let o = run(&shipped("smoke.cfg"), &out, &a);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outs.push((
            std::fs::read(out.join("ratios.csv")).unwrap(),
            std::fs::read(out.join("checks.csv")).unwrap(),
        ));
    }
    assert!(outs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = run(&shipped("smoke.cfg"), &first, &["--seed", "99", "--replicas", "500", "--suite", "ratios", "lemma"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let second = dir.path().join("second");
    let o = run(&first.join("manifest.json"), &second, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["ratios.csv", "checks.csv"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
    let ratios = std::fs::read_to_string(second.join("ratios.csv")).unwrap();
    assert!(ratios.lines().nth(1).unwrap().ends_with(",500,99"));
}

#[test]
fn output_directory_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = bin()
        .args(["run", "--config"])
        .arg(shipped("smoke.cfg"))
        .env("JUMPLQ_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("manifest.json").exists());
}
