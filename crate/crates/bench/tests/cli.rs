use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn strata(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata")).current_dir(root()).args(args).output().expect("spawn strata")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn replay_passes_after_two_iterations() {
    let out = tempfile::tempdir().unwrap();
    let o = strata(&["replay", "--out", path(out.path())]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim(), "PASS after 2 iterations");
    assert!(out.path().join("walkthrough/0/transcript.jsonl").is_file());
}

#[test]
fn offline_pipeline_builds_indexes_then_runs_a_task() {
    let out = tempfile::tempdir().unwrap();
    let db = out.path().join("topologies.idx");
    let kb = out.path().join("knowledge.idx");
    let o = strata(&["db", "build", "--output", path(&db)]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("indexed 10 topologies"));
    let o = strata(&["kb", "build", "--output", path(&kb)]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("indexed "));

    let o = strata(&[
        "run",
        "--task",
        "1",
        "--topology-index",
        path(&db),
        "--knowledge-index",
        path(&kb),
        "--out",
        path(out.path()),
    ]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).starts_with("task1 PASS"), "{}", stdout(&o));
    let transcript = std::fs::read_to_string(out.path().join("task1/0/transcript.jsonl")).unwrap();
    assert!(transcript.lines().count() >= 3);
}

#[test]
fn bench_writes_a_report_that_report_prints() {
    let out = tempfile::tempdir().unwrap();
    let config = out.path().join("bench.toml");
    std::fs::write(&config, "trials = 2\n[bo]\nn_iterations = 10\n").unwrap();
    let o = strata(&["bench", "--config", path(&config), "--tasks", "1,3", "--out", path(out.path())]);
    assert!(o.status.success(), "{o:?}");
    let table = stdout(&o);
    assert!(table.contains("| Metric | 1 | 3 | Avg. |"), "{table}");
    let o = strata(&["report", "--out", path(out.path())]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o), table);
    assert_eq!(std::fs::read_to_string(out.path().join("report.md")).unwrap(), table);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(strata(&["bench", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(strata(&["run", "--task", "11"]).status.code(), Some(1));
    assert_eq!(strata(&["report", "--out", "/nonexistent/strata"]).status.code(), Some(1));
    let help = strata(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("replay"));
}
