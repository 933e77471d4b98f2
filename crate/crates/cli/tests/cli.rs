use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mrrefine");

fn mrrefine(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("MRREFINE_SEED").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = mrrefine(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn calc() -> String {
    format!("cmd:sh {}", Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/calc.sh").display())
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mrrefine(dir.path(), &["bogus"]).status.code(), Some(1));
    assert_eq!(mrrefine(dir.path(), &["fuzz", "--count", "x"]).status.code(), Some(1));
    assert_eq!(mrrefine(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(mrrefine(dir.path(), &["fuzz", "--min", "5", "--max", "1"]).status.code(), Some(1));
}

#[test]
fn stages_before_run_need_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrrefine(dir.path(), &["analyze", "--log", "log.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["fuzz", "--mode", "exhaustive"]);
    assert!(ok(d, &["run", "--corpus", "corpus.csv", "--k", "5"]).contains("300 records"));
    let table = ok(d, &["analyze", "--log", "log.csv", "--csv", "summary.csv"]);
    assert!(table.contains("55.0%"));
    ok(d, &["review"]);
    ok(d, &["mine", "--log", "log.csv", "--decisions", "decisions.json"]);
    ok(d, &["gen-suite", "--corpus", "corpus.csv", "--text", "suite.txt"]);

    let rules = fs::read_to_string(d.join("rules.txt")).unwrap();
    assert!(rules.contains("func=SUB & rel=lt | MR2=Violated | 0.450 | 1.000 | 1.818 | mined"));
    let csv = fs::read_to_string(d.join("summary.csv")).unwrap();
    assert!(csv.contains("sub,MR2,100,55,45,0.550"));
    let manifest = fs::read_to_string(d.join("campaign.json")).unwrap();
    for artifact in ["corpus", "log", "summary", "summary_csv", "decisions", "rules", "suite", "suite_text"] {
        assert!(manifest.contains(&format!("\"{artifact}\"")), "{artifact} not recorded");
    }
}

#[test]
fn seed_comes_from_the_environment() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    Command::new(BIN).args(["fuzz"]).current_dir(a.path()).env("MRREFINE_SEED", "42").output().unwrap();
    ok(b.path(), &["fuzz", "--seed", "42"]);
    assert_eq!(fs::read(a.path().join("corpus.csv")).unwrap(), fs::read(b.path().join("corpus.csv")).unwrap());
}

#[test]
fn k_is_drawn_from_the_seed_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["fuzz", "--seed", "3"]);
    let out = ok(dir.path(), &["run", "--corpus", "corpus.csv"]);
    let k: i64 = out.trim_start_matches("k = ").split(';').next().unwrap().parse().unwrap();
    assert!((2..=9).contains(&k));
}

#[test]
fn sut_failure_exits_2_with_a_partial_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["fuzz", "--count", "5"]);
    let out = mrrefine(d, &["run", "--corpus", "corpus.csv", "--k", "2", "--sut", &calc(), "--functions", "add,div"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(d.join("log.csv")).unwrap();
    assert!(log.contains("# PARTIAL"));
    let analyze = mrrefine(d, &["analyze", "--log", "log.csv"]);
    assert_eq!(analyze.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&analyze.stderr).contains("partial"));
}

#[test]
fn fault_decision_blocks_mining_and_suite_generation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["fuzz", "--mode", "exhaustive"]);
    ok(d, &["run", "--corpus", "corpus.csv", "--k", "5"]);
    ok(d, &["analyze", "--log", "log.csv"]);
    fs::write(d.join("overrides.json"), r#"{"sub.MR1": {"classification": "Fault"}}"#).unwrap();
    let review = mrrefine(d, &["review", "--decisions", "overrides.json"]);
    assert!(review.status.success());
    assert!(String::from_utf8_lossy(&review.stderr).contains("sub.MR1"));
    assert_eq!(mrrefine(d, &["mine", "--log", "log.csv", "--decisions", "decisions.json"]).status.code(), Some(3));
    assert_eq!(mrrefine(d, &["gen-suite", "--corpus", "corpus.csv"]).status.code(), Some(3));
}

#[test]
fn invalid_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["fuzz", "--mode", "exhaustive"]);
    ok(d, &["run", "--corpus", "corpus.csv", "--k", "5"]);
    ok(d, &["analyze", "--log", "log.csv"]);
    fs::write(d.join("overrides.json"), r#"{"add.MR1": {"include_as": "NegativeTest"}}"#).unwrap();
    assert_eq!(mrrefine(d, &["review", "--decisions", "overrides.json"]).status.code(), Some(1));
}
