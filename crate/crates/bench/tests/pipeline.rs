use std::path::{Path, PathBuf};

use strata_bench::report::recompute;
use strata_bench::{replay, run_benchmark, BenchmarkConfig, BenchmarkReport};
use strata_core::optimizer::BoConfig;

fn config(out: &Path) -> BenchmarkConfig {
    BenchmarkConfig {
        tasks: vec![1, 8],
        trials: 2,
        data_dir: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"),
        out_dir: out.to_path_buf(),
        bo: BoConfig { n_iterations: 15, ..BoConfig::default() },
        ..BenchmarkConfig::default()
    }
}

#[test]
fn benchmark_is_deterministic_and_auditable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let one = run_benchmark(&config(a.path())).unwrap();
    let mut two = run_benchmark(&config(b.path())).unwrap();
    two.config.out_dir = one.config.out_dir.clone();
    assert_eq!(one, two);
    assert_eq!(recompute(&one, a.path()).unwrap(), one);
    assert_eq!(BenchmarkReport::load(a.path()).unwrap(), one);
    for task in &one.tasks {
        assert_eq!(task.n, 2);
        for t in &task.trials {
            assert!(a.path().join(t.result.as_ref().unwrap()).is_file());
        }
    }
}

#[test]
fn tampered_trial_result_breaks_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_benchmark(&config(dir.path())).unwrap();
    let rel = report.tasks[0].trials[0].result.clone().unwrap();
    let path = dir.path().join(rel);
    let mut result: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let passed = result["passed"].as_bool().unwrap();
    result["passed"] = serde_json::Value::Bool(!passed);
    std::fs::write(&path, result.to_string()).unwrap();
    assert_ne!(recompute(&report, dir.path()).unwrap(), report);
}

#[test]
fn ablations_are_recorded_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.tasks = vec![1];
    cfg.ablations.disable_em = true;
    cfg.ablations.disable_io = true;
    cfg.ablations.disable_knowledge = true;
    let report = run_benchmark(&cfg).unwrap();
    assert!(report.config.ablations.disable_em && report.config.ablations.disable_io);
    assert_eq!(report.tasks.len(), 1);
}

#[test]
fn replay_helper_matches_the_walkthrough() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let result = replay(&cfg, &cfg.data_dir.join("fixtures/walkthrough")).unwrap();
    assert!(result.passed);
    assert_eq!(result.iterations_used, 2);
    assert_eq!(result.topology_id.as_deref(), Some("two_stage_miller"));
}
